//! Network descriptors: parsing, validation and convolution geometry.
//!
//! A descriptor lists only the *major* layers of a CNN (convolutions,
//! depthwise convolutions and fully-connected layers). Pooling, activation
//! and concatenation are folded into the preceding major layer, so a layer
//! whose input is not the previous layer's output (after a pooling step, a
//! residual projection, an inception branch) carries `"reshape": true`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetDescError {
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("layer {layer}: field `{field}` must be {requirement}, got {value}")]
    Dimension {
        layer: usize,
        field: &'static str,
        requirement: &'static str,
        value: i64,
    },
    #[error("layer {layer}: {message}")]
    Layer { layer: usize, message: String },
    #[error("layers {prev} and {next} do not chain: {detail}")]
    Chaining { prev: usize, next: usize, detail: String },
    #[error("layer {layer}: filter {filter} exceeds padded input {padded} along {axis}")]
    Domain {
        layer: usize,
        axis: &'static str,
        filter: usize,
        padded: usize,
    },
    #[error("network has no layers")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    FullyConnected,
}

impl LayerKind {
    pub fn is_conv(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::DepthwiseConv)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Conv => "conv",
            LayerKind::DepthwiseConv => "depthwise_conv",
            LayerKind::FullyConnected => "fully_connected",
        })
    }
}

/// One major layer with its static geometry. All sizes are in elements.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDescriptor {
    /// 1-based position in network order.
    pub id: usize,
    pub kind: LayerKind,
    pub input_w: usize,
    pub input_h: usize,
    pub input_d: usize,
    pub filter_w: usize,
    pub filter_h: usize,
    pub filter_d: usize,
    pub ofm: usize,
    pub pad: usize,
    pub stride: usize,
    /// Output neuron count; only meaningful for fully-connected layers.
    pub neurons: usize,
    pub label: String,
    /// Input is not the previous layer's output (minor layers in between).
    pub reshape: bool,
}

impl LayerDescriptor {
    pub fn conv(id: usize, input: [usize; 3], filter: [usize; 3], ofm: usize, pad: usize, stride: usize) -> Self {
        Self {
            id,
            kind: LayerKind::Conv,
            input_w: input[0],
            input_h: input[1],
            input_d: input[2],
            filter_w: filter[0],
            filter_h: filter[1],
            filter_d: filter[2],
            ofm,
            pad,
            stride,
            neurons: 0,
            label: String::new(),
            reshape: false,
        }
    }

    pub fn depthwise(id: usize, input: [usize; 3], filter: [usize; 2], pad: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::DepthwiseConv,
            ofm: input[2],
            ..Self::conv(id, input, [filter[0], filter[1], 1], input[2], pad, stride)
        }
    }

    pub fn fully_connected(id: usize, input: [usize; 3], neurons: usize) -> Self {
        Self {
            id,
            kind: LayerKind::FullyConnected,
            input_w: input[0],
            input_h: input[1],
            input_d: input[2],
            filter_w: 0,
            filter_h: 0,
            filter_d: 0,
            ofm: 0,
            pad: 0,
            stride: 0,
            neurons,
            label: String::new(),
            reshape: false,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_reshape(mut self) -> Self {
        self.reshape = true;
        self
    }

    pub fn input_elements(&self) -> usize {
        self.input_w * self.input_h * self.input_d
    }

    /// Output tensor dims `(w, h, d)`. Fully-connected layers produce `(1, 1, neurons)`.
    pub fn output_dims(&self) -> Result<(usize, usize, usize), NetDescError> {
        match self.kind {
            LayerKind::FullyConnected => Ok((1, 1, self.neurons)),
            _ => conv_output_dims(self),
        }
    }

    fn validate(&self) -> Result<(), NetDescError> {
        let positive = |field: &'static str, value: usize| {
            if value == 0 {
                Err(NetDescError::Dimension {
                    layer: self.id,
                    field,
                    requirement: ">= 1",
                    value: 0,
                })
            } else {
                Ok(())
            }
        };
        positive("input[0]", self.input_w)?;
        positive("input[1]", self.input_h)?;
        positive("input[2]", self.input_d)?;
        match self.kind {
            LayerKind::FullyConnected => positive("neurons", self.neurons),
            LayerKind::Conv | LayerKind::DepthwiseConv => {
                positive("filter[0]", self.filter_w)?;
                positive("filter[1]", self.filter_h)?;
                positive("filter[2]", self.filter_d)?;
                positive("ofm", self.ofm)?;
                positive("stride", self.stride)?;
                if self.kind == LayerKind::Conv && self.input_d != self.filter_d {
                    return Err(NetDescError::Layer {
                        layer: self.id,
                        message: format!(
                            "input depth {} does not match filter depth {}",
                            self.input_d, self.filter_d
                        ),
                    });
                }
                if self.kind == LayerKind::DepthwiseConv && self.ofm != self.input_d {
                    return Err(NetDescError::Layer {
                        layer: self.id,
                        message: format!("depthwise ofm {} must equal input depth {}", self.ofm, self.input_d),
                    });
                }
                conv_output_dims(self).map(|_| ())
            }
        }
    }
}

/// GEMM lowering of a layer: image matrix `n x k` times filter matrix `k x m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GemmDims {
    pub n: u64,
    pub k: u64,
    pub m: u64,
}

impl GemmDims {
    pub fn new(n: u64, k: u64, m: u64) -> Self {
        debug_assert!(n >= 1 && k >= 1 && m >= 1);
        Self { n, k, m }
    }

    pub fn ops(&self) -> u64 {
        self.n * self.k * self.m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub name: String,
    pub layers: Vec<LayerDescriptor>,
}

impl NetworkModel {
    /// Builds and validates a network from already-constructed layers.
    pub fn new(name: impl Into<String>, layers: Vec<LayerDescriptor>) -> Result<Self, NetDescError> {
        let net = Self {
            name: name.into(),
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    /// Number of major layers (W).
    pub fn major_layers(&self) -> usize {
        self.layers.len()
    }

    fn validate(&self) -> Result<(), NetDescError> {
        if self.layers.is_empty() {
            return Err(NetDescError::Empty);
        }
        for (idx, layer) in self.layers.iter().enumerate() {
            if layer.id != idx + 1 {
                return Err(NetDescError::Layer {
                    layer: layer.id,
                    message: format!("expected id {} (ids must be 1..W in order)", idx + 1),
                });
            }
            layer.validate()?;
        }
        for pair in self.layers.windows(2) {
            let (prev, next) = (&pair[0], &pair[1]);
            if next.reshape {
                continue;
            }
            let out = prev.output_dims()?;
            let ok = match next.kind {
                // a flattening FC only needs the element count to agree
                LayerKind::FullyConnected => out.0 * out.1 * out.2 == next.input_elements(),
                _ => out == (next.input_w, next.input_h, next.input_d),
            };
            if !ok {
                return Err(NetDescError::Chaining {
                    prev: prev.id,
                    next: next.id,
                    detail: format!(
                        "layer {} outputs {}x{}x{} but layer {} expects {}x{}x{}",
                        prev.id, out.0, out.1, out.2, next.id, next.input_w, next.input_h, next.input_d
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Output tensor size of a (depthwise) convolution:
/// `floor((I - F + 2*pad) / stride) + 1` per spatial axis, depth `ofm`.
pub fn conv_output_dims(layer: &LayerDescriptor) -> Result<(usize, usize, usize), NetDescError> {
    if !layer.kind.is_conv() {
        return Err(NetDescError::Layer {
            layer: layer.id,
            message: "output geometry is only defined for convolutions".into(),
        });
    }
    if layer.stride == 0 {
        return Err(NetDescError::Dimension {
            layer: layer.id,
            field: "stride",
            requirement: ">= 1",
            value: 0,
        });
    }
    let axis = |name: &'static str, input: usize, filter: usize| {
        let padded = input + 2 * layer.pad;
        if filter > padded {
            return Err(NetDescError::Domain {
                layer: layer.id,
                axis: name,
                filter,
                padded,
            });
        }
        Ok((padded - filter) / layer.stride + 1)
    };
    let w = axis("width", layer.input_w, layer.filter_w)?;
    let h = axis("height", layer.input_h, layer.filter_h)?;
    Ok((w, h, layer.ofm))
}

/// GEMM dimensions of a layer.
///
/// Depthwise convolutions lower per channel, so `k` drops the depth factor.
/// Fully-connected layers map to `(1, inputs, neurons)`.
pub fn gemm_dims(layer: &LayerDescriptor) -> Result<GemmDims, NetDescError> {
    let dims = match layer.kind {
        LayerKind::Conv => {
            let (w, h, _) = conv_output_dims(layer)?;
            GemmDims::new(
                (w * h) as u64,
                (layer.filter_w * layer.filter_h * layer.filter_d) as u64,
                layer.ofm as u64,
            )
        }
        LayerKind::DepthwiseConv => {
            let (w, h, _) = conv_output_dims(layer)?;
            GemmDims::new(
                (w * h) as u64,
                (layer.filter_w * layer.filter_h) as u64,
                layer.ofm as u64,
            )
        }
        LayerKind::FullyConnected => {
            if layer.neurons == 0 || layer.input_elements() == 0 {
                return Err(NetDescError::Dimension {
                    layer: layer.id,
                    field: "neurons",
                    requirement: ">= 1",
                    value: layer.neurons as i64,
                });
            }
            GemmDims::new(1, layer.input_elements() as u64, layer.neurons as u64)
        }
    };
    Ok(dims)
}

// ---- JSON document schema ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    name: String,
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    id: i64,
    kind: LayerKind,
    input: [i64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    filter: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ofm: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pad: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    neurons: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    reshape: bool,
}

fn schema_err(err: serde_json::Error) -> NetDescError {
    NetDescError::Schema {
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

impl LayerDoc {
    fn into_layer(self, position: usize) -> Result<LayerDescriptor, NetDescError> {
        let layer_no = if self.id >= 1 { self.id as usize } else { position };
        let dim = |field: &'static str, value: i64, min: i64| -> Result<usize, NetDescError> {
            if value < min {
                Err(NetDescError::Dimension {
                    layer: layer_no,
                    field,
                    requirement: if min == 0 { ">= 0" } else { ">= 1" },
                    value,
                })
            } else {
                Ok(value as usize)
            }
        };
        let required = |field: &'static str, value: Option<i64>| {
            value.ok_or_else(|| NetDescError::Layer {
                layer: layer_no,
                message: format!("missing field `{field}` for {} layer", self.kind),
            })
        };
        let id = dim("id", self.id, 1)?;
        let input = [
            dim("input[0]", self.input[0], 1)?,
            dim("input[1]", self.input[1], 1)?,
            dim("input[2]", self.input[2], 1)?,
        ];
        let mut layer = match self.kind {
            LayerKind::FullyConnected => {
                let neurons = dim("neurons", required("neurons", self.neurons)?, 1)?;
                LayerDescriptor::fully_connected(id, input, neurons)
            }
            kind => {
                let filter = self.filter.as_deref().ok_or_else(|| NetDescError::Layer {
                    layer: layer_no,
                    message: format!("missing field `filter` for {kind} layer"),
                })?;
                let filter = match (kind, filter.len()) {
                    (_, 3) => [filter[0], filter[1], filter[2]],
                    (LayerKind::DepthwiseConv, 2) => [filter[0], filter[1], 1],
                    _ => {
                        return Err(NetDescError::Layer {
                            layer: layer_no,
                            message: format!("`filter` must have 3 entries, got {}", filter.len()),
                        })
                    }
                };
                let ofm = match (kind, self.ofm) {
                    (LayerKind::DepthwiseConv, None) => input[2],
                    (_, v) => dim("ofm", required("ofm", v)?, 1)?,
                };
                let mut layer = LayerDescriptor::conv(
                    id,
                    input,
                    [
                        dim("filter[0]", filter[0], 1)?,
                        dim("filter[1]", filter[1], 1)?,
                        dim("filter[2]", filter[2], 1)?,
                    ],
                    ofm,
                    dim("pad", self.pad.unwrap_or(0), 0)?,
                    dim("stride", self.stride.unwrap_or(1), 1)?,
                );
                layer.kind = kind;
                layer
            }
        };
        layer.label = self.label.unwrap_or_default();
        layer.reshape = self.reshape;
        Ok(layer)
    }

    fn from_layer(layer: &LayerDescriptor) -> Self {
        let conv = layer.kind.is_conv();
        Self {
            id: layer.id as i64,
            kind: layer.kind,
            input: [layer.input_w as i64, layer.input_h as i64, layer.input_d as i64],
            filter: conv.then(|| vec![layer.filter_w as i64, layer.filter_h as i64, layer.filter_d as i64]),
            ofm: conv.then_some(layer.ofm as i64),
            pad: conv.then_some(layer.pad as i64),
            stride: conv.then_some(layer.stride as i64),
            neurons: (!conv).then_some(layer.neurons as i64),
            label: (!layer.label.is_empty()).then(|| layer.label.clone()),
            reshape: layer.reshape,
        }
    }
}

/// Parses and validates a JSON network descriptor.
pub fn parse_network(source: &str) -> Result<NetworkModel, NetDescError> {
    let doc: NetworkDoc = serde_json::from_str(source).map_err(schema_err)?;
    let layers = doc
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.into_layer(i + 1))
        .collect::<Result<Vec<_>, _>>()?;
    NetworkModel::new(doc.name, layers)
}

pub fn serialize_network(net: &NetworkModel) -> String {
    let doc = NetworkDoc {
        name: net.name.clone(),
        layers: net.layers.iter().map(LayerDoc::from_layer).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("network document serializes")
}
