//! Regression latency model for convolution (as GEMM) and fully-connected
//! layers on homogeneous core groups, and the layer x stage-configuration
//! time matrix built from it.
//!
//! Single-core GEMM time is a linear model over the terms
//! `{N, K, M, NK, KM, NM, NKM, 1}`. Multi-threaded time splits the `N` rows
//! into `ceil(N / ts)` iterations, dispatched statically over `h` threads;
//! the slowest thread decides:
//!
//! ```text
//! T_iter  = (T_single - a1) / n_iter + a2
//! T_multi = T_iter * ceil(n_iter / h) + a3
//! ```
//!
//! Fully-connected layers use `g1 * (inputs * neurons) + g2`, fitted per
//! (core type, core count, neuron class).

mod fit;
mod mape;
mod matrix;
mod measurements;

pub use fit::{
    fit_cluster, fit_fc, fit_platform, fit_single_core, fit_thread_coefficients, ClusterDiagnostics, FitError,
};
pub use mape::{compare_with_matrix, compare_with_model, prediction_error, ErrorEntry, MapeRow, MapeTable};
pub use matrix::{build_time_matrix, TimeMatrix};
pub use measurements::{read_measurements, write_measurements, MeasurementError, MeasurementSample, Workload};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netdesc::GemmDims;
use crate::stage::CoreType;

/// Floor applied to every predicted time, in seconds.
pub const TIME_FLOOR: f64 = 1e-6;

/// Names of the single-core regression terms, in coefficient order.
pub const GEMM_TERMS: [&str; 8] = ["N", "K", "M", "NK", "KM", "NM", "NKM", "1"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{core_type} cluster has {max} cores, requested {requested}")]
    CoreCountOutOfRange {
        core_type: CoreType,
        requested: u32,
        max: u32,
    },
    #[error("platform has no {0} cluster")]
    MissingCluster(CoreType),
    #[error("no fully-connected model for {core_type}{count}")]
    MissingFcModel { core_type: CoreType, count: u32 },
    #[error("invalid platform: {0}")]
    InvalidPlatform(String),
    #[error("invalid time matrix: {0}")]
    InvalidMatrix(String),
    #[error("layer {layer}: {message}")]
    Layer { layer: usize, message: String },
    #[error("empty reference set")]
    EmptyReference,
}

/// `beta[0..8]` multiply `N, K, M, NK, KM, NM, NKM, 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GemmCoefficients {
    pub beta: [f64; 8],
}

impl GemmCoefficients {
    pub fn new(beta: [f64; 8]) -> Self {
        Self { beta }
    }

    pub fn terms(g: &GemmDims) -> [f64; 8] {
        let (n, k, m) = (g.n as f64, g.k as f64, g.m as f64);
        [n, k, m, n * k, k * m, n * m, n * k * m, 1.0]
    }

    /// Unclamped model output.
    pub fn evaluate(&self, g: &GemmDims) -> f64 {
        Self::terms(g).iter().zip(&self.beta).map(|(t, b)| t * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThreadCoefficients {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcCoefficients {
    pub gamma1: f64,
    pub gamma2: f64,
}

/// Fully-connected model for one (core count, neuron class).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcEntry {
    pub core_count: u32,
    pub neurons: u64,
    #[serde(flatten)]
    pub coefficients: FcCoefficients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub core_type: CoreType,
    pub max_cores: u32,
    pub tile_size: u64,
    pub gemm: GemmCoefficients,
    pub thread: ThreadCoefficients,
    #[serde(default)]
    pub fc: Vec<FcEntry>,
}

impl ClusterModel {
    /// FC entry for `h` cores whose neuron class is nearest to `neurons`.
    /// The flag is `false` when the exact class was not fitted.
    pub fn fc_entry(&self, h: u32, neurons: u64) -> Option<(&FcEntry, bool)> {
        self.fc
            .iter()
            .filter(|e| e.core_count == h)
            .min_by_key(|e| (e.neurons.abs_diff(neurons), e.neurons))
            .map(|e| (e, e.neurons == neurons))
    }

    fn check_count(&self, h: u32) -> Result<(), ModelError> {
        if h == 0 || h > self.max_cores {
            return Err(ModelError::CoreCountOutOfRange {
                core_type: self.core_type,
                requested: h,
                max: self.max_cores,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformModel {
    pub name: String,
    pub clusters: Vec<ClusterModel>,
}

impl PlatformModel {
    pub fn new(name: impl Into<String>, mut clusters: Vec<ClusterModel>) -> Result<Self, ModelError> {
        clusters.sort_by_key(|c| c.core_type);
        let platform = Self {
            name: name.into(),
            clusters,
        };
        platform.validate()?;
        Ok(platform)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.clusters.is_empty() {
            return Err(ModelError::InvalidPlatform("no clusters".into()));
        }
        for (i, c) in self.clusters.iter().enumerate() {
            if self.clusters[..i].iter().any(|o| o.core_type == c.core_type) {
                return Err(ModelError::InvalidPlatform(format!(
                    "duplicate {} cluster",
                    c.core_type
                )));
            }
            if c.max_cores == 0 || c.tile_size == 0 {
                return Err(ModelError::InvalidPlatform(format!(
                    "{} cluster needs max_cores >= 1 and tile_size >= 1",
                    c.core_type
                )));
            }
            let finite = c.gemm.beta.iter().all(|b| b.is_finite())
                && [c.thread.alpha1, c.thread.alpha2, c.thread.alpha3]
                    .iter()
                    .all(|a| a.is_finite())
                && c.fc
                    .iter()
                    .all(|e| e.coefficients.gamma1.is_finite() && e.coefficients.gamma2.is_finite());
            if !finite {
                return Err(ModelError::InvalidPlatform(format!(
                    "{} cluster has non-finite coefficients",
                    c.core_type
                )));
            }
        }
        Ok(())
    }

    pub fn cluster(&self, core_type: CoreType) -> Result<&ClusterModel, ModelError> {
        self.clusters
            .iter()
            .find(|c| c.core_type == core_type)
            .ok_or(ModelError::MissingCluster(core_type))
    }

    /// Total core count H.
    pub fn total_cores(&self) -> u32 {
        self.clusters.iter().map(|c| c.max_cores).sum()
    }

    pub fn cores_of(&self, core_type: CoreType) -> u32 {
        self.cluster(core_type).map(|c| c.max_cores).unwrap_or(0)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct Doc {
            name: String,
            clusters: Vec<ClusterModel>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| ModelError::InvalidPlatform(e.to_string()))?;
        Self::new(doc.name, doc.clusters)
    }
}

pub(crate) fn clamp_time(raw: f64, what: &str) -> (f64, bool) {
    if raw >= TIME_FLOOR {
        return (raw, false);
    }
    warn!("{what}: raw prediction {raw:.3e} s clamped to {TIME_FLOOR:e} s");
    (TIME_FLOOR, true)
}

/// Single-core GEMM time, floored at [`TIME_FLOOR`].
pub fn predict_single_core(c: &GemmCoefficients, g: &GemmDims) -> f64 {
    clamp_time(c.evaluate(g), "single-core GEMM").0
}

/// `ceil(N / ts)`, at least one.
pub fn iteration_count(g: &GemmDims, tile_size: u64) -> u64 {
    assert!(tile_size >= 1, "tile size must be positive");
    g.n.div_ceil(tile_size).max(1)
}

fn raw_iteration_time(t_single: f64, n_iter: u64, a: &ThreadCoefficients) -> f64 {
    (t_single - a.alpha1) / n_iter as f64 + a.alpha2
}

/// Time of one dispatch iteration; non-positive values become [`TIME_FLOOR`].
pub fn predict_iteration_time(t_single: f64, n_iter: u64, a: &ThreadCoefficients) -> f64 {
    assert!(n_iter >= 1, "iteration count must be positive");
    positive_iteration_time(raw_iteration_time(t_single, n_iter, a))
}

fn positive_iteration_time(raw: f64) -> f64 {
    if raw > 0.0 {
        raw
    } else {
        clamp_time(raw, "iteration time").0
    }
}

/// Iterations per thread under static equal dispatch (first threads take the remainder).
pub fn equal_split(n_iter: u64, threads: u32) -> Vec<u64> {
    let h = threads as u64;
    (0..h).map(|t| n_iter / h + u64::from(t < n_iter % h)).collect()
}

/// Slowest-thread time for an explicit per-thread iteration assignment.
pub fn max_over_threads(t_iter: f64, per_thread: &[u64], a: &ThreadCoefficients) -> f64 {
    per_thread.iter().map(|&it| t_iter * it as f64).fold(0.0, f64::max) + a.alpha3
}

/// The equal-split closed form `(T - a1)/h + a2 * n_iter / h + a3`.
pub fn multicore_closed_form(t_single: f64, n_iter: u64, h: u32, a: &ThreadCoefficients) -> f64 {
    let h = h as f64;
    (t_single - a.alpha1) / h + a.alpha2 * n_iter as f64 / h + a.alpha3
}

/// Unclamped multi-core time from an (already clamped) single-core time.
pub(crate) fn multicore_from_single(t_single: f64, n_iter: u64, h: u32, a: &ThreadCoefficients) -> f64 {
    let t_iter = raw_iteration_time(t_single, n_iter, a);
    if t_iter <= 0.0 {
        let slowest = n_iter.div_ceil(h as u64);
        return positive_iteration_time(t_iter) * slowest as f64 + a.alpha3;
    }
    if h == 1 {
        (t_single - a.alpha1) + a.alpha2 * n_iter as f64 + a.alpha3
    } else {
        t_iter * n_iter.div_ceil(h as u64) as f64 + a.alpha3
    }
}

/// GEMM time on `h` cores of `cluster`, floored at [`TIME_FLOOR`].
pub fn predict_multicore(cluster: &ClusterModel, g: &GemmDims, h: u32) -> Result<f64, ModelError> {
    cluster.check_count(h)?;
    let t_single = predict_single_core(&cluster.gemm, g);
    let n_iter = iteration_count(g, cluster.tile_size);
    let raw = multicore_from_single(t_single, n_iter, h, &cluster.thread);
    Ok(clamp_time(raw, "multi-core GEMM").0)
}

/// Fully-connected time on `h` cores. Falls back to the nearest fitted
/// neuron class (with a warning) when `neurons` has no exact entry.
pub fn predict_fc(cluster: &ClusterModel, inputs: u64, neurons: u64, h: u32) -> Result<f64, ModelError> {
    cluster.check_count(h)?;
    let (entry, exact) = cluster.fc_entry(h, neurons).ok_or(ModelError::MissingFcModel {
        core_type: cluster.core_type,
        count: h,
    })?;
    if !exact {
        warn!(
            "no fully-connected model for {neurons} neurons on {}{h}; using the {}-neuron class",
            cluster.core_type, entry.neurons
        );
    }
    let FcCoefficients { gamma1, gamma2 } = entry.coefficients;
    let raw = gamma1 * (inputs as f64 * neurons as f64) + gamma2;
    Ok(clamp_time(raw, "fully-connected").0)
}
