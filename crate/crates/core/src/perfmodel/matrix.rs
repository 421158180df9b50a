use serde::{Deserialize, Serialize};

use super::{clamp_time, iteration_count, multicore_from_single, predict_fc, ModelError, PlatformModel, TIME_FLOOR};
use crate::netdesc::{gemm_dims, LayerKind, NetworkModel};
use crate::stage::{CoreType, StageConfig};

/// Predicted time (seconds) of every layer on every stage configuration.
///
/// Columns are ordered Big before Small, then by ascending core count.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMatrix {
    configs: Vec<StageConfig>,
    times: Vec<Vec<f64>>,
    warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    schema: u32,
    configs: Vec<String>,
    /// Row per layer, milliseconds.
    times_ms: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

impl TimeMatrix {
    /// `times[layer][config]` in seconds; every entry must be positive and finite.
    pub fn new(mut configs: Vec<StageConfig>, mut times: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if configs.is_empty() {
            return Err(ModelError::InvalidMatrix("no stage configurations".into()));
        }
        if times.is_empty() {
            return Err(ModelError::InvalidMatrix("no layers".into()));
        }
        for (l, row) in times.iter().enumerate() {
            if row.len() != configs.len() {
                return Err(ModelError::InvalidMatrix(format!(
                    "layer {} has {} entries for {} configurations",
                    l + 1,
                    row.len(),
                    configs.len()
                )));
            }
            if let Some(bad) = row.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
                return Err(ModelError::InvalidMatrix(format!(
                    "layer {} has non-positive time {bad}",
                    l + 1
                )));
            }
        }
        // canonical column order
        let mut order: Vec<usize> = (0..configs.len()).collect();
        order.sort_by_key(|&c| configs[c]);
        if order.windows(2).any(|w| configs[w[0]] == configs[w[1]]) {
            return Err(ModelError::InvalidMatrix("duplicate stage configuration".into()));
        }
        configs = order.iter().map(|&c| configs[c]).collect();
        for row in &mut times {
            *row = order.iter().map(|&c| row[c]).collect();
        }
        Ok(Self {
            configs,
            times,
            warnings: Vec::new(),
        })
    }

    /// Number of layers (W).
    pub fn layers(&self) -> usize {
        self.times.len()
    }

    pub fn configs(&self) -> &[StageConfig] {
        &self.configs
    }

    pub fn column(&self, cfg: StageConfig) -> Option<usize> {
        self.configs.binary_search(&cfg).ok()
    }

    /// Time of 0-based `layer` on `cfg`.
    ///
    /// Panics if `cfg` is not a column of the matrix.
    pub fn time(&self, layer: usize, cfg: StageConfig) -> f64 {
        let c = self
            .column(cfg)
            .unwrap_or_else(|| panic!("stage configuration {cfg} is not in the time matrix"));
        self.times[layer][c]
    }

    pub fn row(&self, layer: usize) -> &[f64] {
        &self.times[layer]
    }

    /// Per-layer times of one configuration.
    pub fn column_times(&self, cfg: StageConfig) -> Vec<f64> {
        let c = self.column(cfg).expect("configuration in matrix");
        self.times.iter().map(|r| r[c]).collect()
    }

    /// Largest core count available for `core_type`.
    pub fn max_cores(&self, core_type: CoreType) -> u32 {
        self.configs
            .iter()
            .filter(|c| c.core_type == core_type)
            .map(|c| c.count)
            .max()
            .unwrap_or(0)
    }

    /// True when every `(type, 1..=max)` column exists.
    pub fn is_complete(&self) -> bool {
        CoreType::ALL.iter().all(|&t| {
            let max = self.max_cores(t);
            (1..=max).all(|h| self.column(StageConfig::new(t, h)).is_some())
        })
    }

    /// Warnings gathered while building the matrix (clamps, monotonicity).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `(layer, config)` pairs (1-based layer) where adding a core makes the
    /// layer slower.
    pub fn monotonicity_violations(&self) -> Vec<(usize, StageConfig)> {
        let mut out = Vec::new();
        for (l, row) in self.times.iter().enumerate() {
            for (c, pair) in self.configs.windows(2).enumerate() {
                if pair[0].core_type == pair[1].core_type && row[c + 1] > row[c] {
                    out.push((l + 1, pair[1]));
                }
            }
        }
        out
    }

    pub fn to_json(&self, note: Option<&str>) -> String {
        let doc = MatrixDoc {
            schema: 1,
            configs: self.configs.iter().map(|c| c.to_string()).collect(),
            times_ms: self.times.iter().map(|r| r.iter().map(|t| t * 1e3).collect()).collect(),
            note: note.map(str::to_owned),
        };
        serde_json::to_string_pretty(&doc).expect("matrix serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: MatrixDoc = serde_json::from_str(text).map_err(|e| ModelError::InvalidMatrix(e.to_string()))?;
        let configs = doc
            .configs
            .iter()
            .map(|c| c.parse::<StageConfig>().map_err(ModelError::InvalidMatrix))
            .collect::<Result<Vec<_>, _>>()?;
        let times = doc
            .times_ms
            .into_iter()
            .map(|r| r.into_iter().map(|t| t / 1e3).collect())
            .collect();
        Self::new(configs, times)
    }
}

/// Predicts every layer of `net` on every `(core type, 1..=max_cores)`
/// configuration of `platform`.
pub fn build_time_matrix(net: &NetworkModel, platform: &PlatformModel) -> Result<TimeMatrix, ModelError> {
    platform.validate()?;
    let configs: Vec<StageConfig> = platform
        .clusters
        .iter()
        .flat_map(|c| (1..=c.max_cores).map(move |h| StageConfig::new(c.core_type, h)))
        .collect();
    let mut warnings = Vec::new();
    let mut clamped = 0usize;
    let mut times = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let g = gemm_dims(layer).map_err(|e| ModelError::Layer {
            layer: layer.id,
            message: e.to_string(),
        })?;
        let mut row = Vec::with_capacity(configs.len());
        for cfg in &configs {
            let cluster = platform.cluster(cfg.core_type)?;
            let t = match layer.kind {
                LayerKind::FullyConnected => {
                    let fallback = cluster
                        .fc_entry(cfg.count, layer.neurons as u64)
                        .is_some_and(|(_, exact)| !exact);
                    if fallback {
                        warnings.push(format!(
                            "layer {}: no {}-neuron FC model on {cfg}, used nearest class",
                            layer.id, layer.neurons
                        ));
                    }
                    predict_fc(cluster, g.k, g.m, cfg.count).map_err(|e| ModelError::Layer {
                        layer: layer.id,
                        message: e.to_string(),
                    })?
                }
                _ => {
                    let (single, c1) = clamp_time(cluster.gemm.evaluate(&g), "single-core GEMM");
                    let n_iter = iteration_count(&g, cluster.tile_size);
                    let (t, c2) = clamp_time(
                        multicore_from_single(single, n_iter, cfg.count, &cluster.thread),
                        "multi-core GEMM",
                    );
                    clamped += usize::from(c1 || c2);
                    t
                }
            };
            if t <= TIME_FLOOR {
                clamped += usize::from(layer.kind == LayerKind::FullyConnected);
            }
            row.push(t);
        }
        times.push(row);
    }
    if clamped > 0 {
        warnings.push(format!(
            "{clamped} predictions were non-positive and clamped to {} ms",
            TIME_FLOOR * 1e3
        ));
    }
    let mut matrix = TimeMatrix::new(configs, times)?;
    let violations = matrix.monotonicity_violations();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|(l, c)| format!("l{l}@{c}")).collect();
        warnings.push(format!("time increases with core count at: {}", list.join(", ")));
    }
    for w in &warnings {
        log::warn!("{}: {w}", net.name);
    }
    matrix.warnings = warnings;
    Ok(matrix)
}
