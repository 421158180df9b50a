//! Least-squares fitting of the single-core, threading and fully-connected
//! coefficients from measurement samples.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    iteration_count, predict_single_core, ClusterModel, FcCoefficients, FcEntry, GemmCoefficients, MeasurementSample,
    PlatformModel, ThreadCoefficients, Workload, GEMM_TERMS,
};
use crate::lstsq::{self, LstsqError, LstsqFit};
use crate::netdesc::GemmDims;
use crate::stage::CoreType;

/// Condition estimates above this produce a diagnostic warning.
const CONDITION_WARN: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("{stage} fit: {source}")]
    Lstsq {
        stage: String,
        #[source]
        source: LstsqError,
    },
    #[error("{stage} fit: {message}")]
    Insufficient { stage: String, message: String },
    #[error("{stage} fit: {message}")]
    InvalidSamples { stage: String, message: String },
}

impl FitError {
    fn lstsq(stage: impl Into<String>, source: LstsqError) -> Self {
        FitError::Lstsq {
            stage: stage.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDiagnostics {
    pub core_type: CoreType,
    pub single_core_samples: usize,
    pub single_core_rms_s: f64,
    pub single_core_condition: f64,
    pub thread_samples: usize,
    pub thread_rms_s: f64,
    pub fc_samples: usize,
    pub fc_rms_s: f64,
    pub warnings: Vec<String>,
}

fn gemm_samples(samples: &[MeasurementSample]) -> impl Iterator<Item = (GemmDims, &MeasurementSample)> {
    samples.iter().filter_map(|s| match s.workload {
        Workload::Gemm(g) => Some((g, s)),
        Workload::Fc { .. } => None,
    })
}

fn single_core_fit(samples: &[MeasurementSample]) -> Result<(GemmCoefficients, LstsqFit), FitError> {
    const STAGE: &str = "single-core GEMM";
    let mut rows = Vec::with_capacity(samples.len());
    let mut y = Vec::with_capacity(samples.len());
    let core_type = samples.first().map(|s| s.core_type);
    for s in samples {
        let Workload::Gemm(g) = s.workload else {
            return Err(FitError::InvalidSamples {
                stage: STAGE.into(),
                message: "fully-connected sample in GEMM set".into(),
            });
        };
        if s.core_count != 1 || Some(s.core_type) != core_type {
            return Err(FitError::InvalidSamples {
                stage: STAGE.into(),
                message: "samples must all be single-core runs on one core type".into(),
            });
        }
        rows.push(GemmCoefficients::terms(&g).to_vec());
        y.push(s.time);
    }
    let w: Vec<f64> = y.iter().map(|t| 1.0 / t).collect();
    let fit = lstsq::solve_weighted(&rows, &y, &w, &GEMM_TERMS).map_err(|e| FitError::lstsq(STAGE, e))?;
    let beta: [f64; 8] = fit.coefficients.clone().try_into().expect("eight terms");
    Ok((GemmCoefficients::new(beta), fit))
}

/// Fits `beta_1..beta_8` to single-core GEMM samples of one core type.
/// Each row is weighted by `1 / time`, so squared relative residuals are minimized.
pub fn fit_single_core(samples: &[MeasurementSample]) -> Result<GemmCoefficients, FitError> {
    single_core_fit(samples).map(|(c, _)| c)
}

fn thread_fit(
    samples: &[MeasurementSample],
    gemm: &GemmCoefficients,
    tile_size: u64,
) -> Result<(ThreadCoefficients, LstsqFit), FitError> {
    const STAGE: &str = "multi-core thread";
    let counts: BTreeSet<u32> = samples.iter().map(|s| s.core_count).collect();
    let mut iters = BTreeSet::new();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for (g, s) in gemm_samples(samples) {
        let n_iter = iteration_count(&g, tile_size);
        iters.insert(n_iter);
        let t_single = predict_single_core(gemm, &g);
        let slowest = n_iter.div_ceil(s.core_count as u64) as f64;
        let share = slowest / n_iter as f64;
        // observed = (T - a1) * share + a2 * slowest + a3
        rows.push(vec![-share, slowest, 1.0]);
        y.push(s.time - t_single * share);
        w.push(1.0 / s.time);
    }
    if counts.len() < 2 || iters.len() < 3 {
        return Err(FitError::Insufficient {
            stage: STAGE.into(),
            message: format!(
                "need >= 2 distinct core counts and >= 3 distinct iteration counts, got {} and {}",
                counts.len(),
                iters.len()
            ),
        });
    }
    let fit =
        lstsq::solve_weighted(&rows, &y, &w, &["alpha1", "alpha2", "alpha3"]).map_err(|e| FitError::lstsq(STAGE, e))?;
    let c = &fit.coefficients;
    Ok((
        ThreadCoefficients {
            alpha1: c[0],
            alpha2: c[1],
            alpha3: c[2],
        },
        fit,
    ))
}

/// Fits `alpha_1..alpha_3` against multi-core GEMM samples of one core type,
/// given that type's single-core coefficients and tile size. Rows are
/// weighted by `1 / time`.
pub fn fit_thread_coefficients(
    samples: &[MeasurementSample],
    gemm: &GemmCoefficients,
    tile_size: u64,
) -> Result<ThreadCoefficients, FitError> {
    thread_fit(samples, gemm, tile_size).map(|(c, _)| c)
}

/// Fits one `(gamma_1, gamma_2)` pair per (core count, neuron class),
/// rows weighted by `1 / time`.
pub fn fit_fc(samples: &[MeasurementSample]) -> Result<Vec<FcEntry>, FitError> {
    fc_fit(samples).map(|(entries, _)| entries)
}

fn fc_fit(samples: &[MeasurementSample]) -> Result<(Vec<FcEntry>, f64), FitError> {
    let mut groups: BTreeMap<(u32, u64), Vec<(u64, f64)>> = BTreeMap::new();
    for s in samples {
        if let Workload::Fc { inputs, neurons } = s.workload {
            groups
                .entry((s.core_count, neurons))
                .or_default()
                .push((inputs, s.time));
        }
    }
    let mut entries = Vec::with_capacity(groups.len());
    let mut worst_rms: f64 = 0.0;
    for ((count, neurons), points) in groups {
        let stage = format!("fully-connected ({count} cores, {neurons} neurons)");
        let distinct: BTreeSet<u64> = points.iter().map(|p| p.0).collect();
        if distinct.len() < 2 {
            return Err(FitError::Insufficient {
                stage,
                message: "need >= 2 distinct input sizes".into(),
            });
        }
        let rows: Vec<Vec<f64>> = points
            .iter()
            .map(|&(i, _)| vec![i as f64 * neurons as f64, 1.0])
            .collect();
        let y: Vec<f64> = points.iter().map(|p| p.1).collect();
        let w: Vec<f64> = y.iter().map(|t| 1.0 / t).collect();
        let fit =
            lstsq::solve_weighted(&rows, &y, &w, &["inputs*neurons", "1"]).map_err(|e| FitError::lstsq(stage, e))?;
        worst_rms = worst_rms.max(fit.rms_residual);
        entries.push(FcEntry {
            core_count: count,
            neurons,
            coefficients: FcCoefficients {
                gamma1: fit.coefficients[0],
                gamma2: fit.coefficients[1],
            },
        });
    }
    Ok((entries, worst_rms))
}

/// Fits every model of one cluster from that cluster's samples. Single-core
/// GEMM rows fit `beta`; rows with two or more cores fit `alpha`.
pub fn fit_cluster(
    core_type: CoreType,
    samples: &[MeasurementSample],
    tile_size: u64,
) -> Result<(ClusterModel, ClusterDiagnostics), FitError> {
    let own: Vec<MeasurementSample> = samples.iter().filter(|s| s.core_type == core_type).copied().collect();
    let gemm_all: Vec<MeasurementSample> = own
        .iter()
        .filter(|s| matches!(s.workload, Workload::Gemm(_)))
        .copied()
        .collect();
    let (single, multi): (Vec<MeasurementSample>, Vec<MeasurementSample>) =
        gemm_all.iter().partition(|s| s.core_count == 1);
    let (gemm, single_fit) = single_core_fit(&single)?;
    let (thread, thread_fit) = thread_fit(&multi, &gemm, tile_size)?;
    let fc_samples = own.len() - gemm_all.len();
    let (fc, fc_rms) = fc_fit(&own)?;
    let max_cores = own.iter().map(|s| s.core_count).max().unwrap_or(1);

    let mut warnings = Vec::new();
    if single_fit.condition_estimate > CONDITION_WARN {
        warnings.push(format!(
            "single-core design is ill-conditioned (estimate {:.2e})",
            single_fit.condition_estimate
        ));
    }
    if fc.is_empty() {
        warnings.push("no fully-connected samples; FC layers cannot be predicted".into());
    } else {
        for h in 1..=max_cores {
            if !fc.iter().any(|e| e.core_count == h) {
                warnings.push(format!("no fully-connected samples on {core_type}{h}"));
            }
        }
    }
    for w in &warnings {
        log::warn!("{core_type} cluster: {w}");
    }

    let model = ClusterModel {
        core_type,
        max_cores,
        tile_size,
        gemm,
        thread,
        fc,
    };
    let diagnostics = ClusterDiagnostics {
        core_type,
        single_core_samples: single.len(),
        single_core_rms_s: single_fit.rms_residual,
        single_core_condition: single_fit.condition_estimate,
        thread_samples: multi.len(),
        thread_rms_s: thread_fit.rms_residual,
        fc_samples,
        fc_rms_s: fc_rms,
        warnings,
    };
    Ok((model, diagnostics))
}

/// Fits every cluster present in `samples`.
pub fn fit_platform(
    name: &str,
    samples: &[MeasurementSample],
    tile_size: impl Fn(CoreType) -> u64,
) -> Result<(PlatformModel, Vec<ClusterDiagnostics>), FitError> {
    let types: BTreeSet<CoreType> = samples.iter().map(|s| s.core_type).collect();
    let mut clusters = Vec::new();
    let mut diagnostics = Vec::new();
    for t in types {
        let (model, diag) = fit_cluster(t, samples, tile_size(t))?;
        clusters.push(model);
        diagnostics.push(diag);
    }
    let platform = PlatformModel::new(name, clusters).map_err(|e| FitError::InvalidSamples {
        stage: "platform".into(),
        message: e.to_string(),
    })?;
    Ok((platform, diagnostics))
}
