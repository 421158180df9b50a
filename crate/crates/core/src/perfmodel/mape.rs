//! Prediction-error tables: mean absolute percentage error per
//! (group, stage configuration), with per-cluster averages.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::{
    predict_fc, predict_multicore, predict_single_core, MeasurementSample, ModelError, PlatformModel, TimeMatrix,
    Workload,
};
use crate::stage::{CoreType, StageConfig};

/// One prediction/measurement pair. `group` is a row label (usually a network).
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEntry {
    pub group: String,
    pub config: StageConfig,
    pub predicted: f64,
    pub measured: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapeRow {
    pub group: String,
    /// Percent, aligned with [`MapeTable::configs`]; `None` where no samples exist.
    pub cells: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapeTable {
    pub configs: Vec<StageConfig>,
    pub rows: Vec<MapeRow>,
    /// Mean of the populated cells of each cluster, percent.
    pub cluster_averages: Vec<(CoreType, f64)>,
}

/// Builds the error table. Rows keep first-appearance order of groups.
pub fn prediction_error(entries: &[ErrorEntry]) -> Result<MapeTable, ModelError> {
    if entries.is_empty() {
        return Err(ModelError::EmptyReference);
    }
    let mut groups: Vec<&str> = Vec::new();
    let mut sums: BTreeMap<(usize, StageConfig), (f64, usize)> = BTreeMap::new();
    for e in entries {
        if e.measured.is_nan() || e.measured <= 0.0 {
            return Err(ModelError::InvalidMatrix(format!(
                "reference time for {} on {} must be positive",
                e.group, e.config
            )));
        }
        let g = match groups.iter().position(|g| *g == e.group) {
            Some(g) => g,
            None => {
                groups.push(&e.group);
                groups.len() - 1
            }
        };
        let slot = sums.entry((g, e.config)).or_insert((0.0, 0));
        slot.0 += ((e.predicted - e.measured) / e.measured).abs() * 100.0;
        slot.1 += 1;
    }
    let mut configs: Vec<StageConfig> = sums.keys().map(|k| k.1).collect();
    configs.sort();
    configs.dedup();
    let rows: Vec<MapeRow> = groups
        .iter()
        .enumerate()
        .map(|(g, name)| MapeRow {
            group: name.to_string(),
            cells: configs
                .iter()
                .map(|c| sums.get(&(g, *c)).map(|(s, n)| s / *n as f64))
                .collect(),
        })
        .collect();
    let cluster_averages = CoreType::ALL
        .iter()
        .filter_map(|&t| {
            let cells: Vec<f64> = rows
                .iter()
                .flat_map(|r| {
                    r.cells
                        .iter()
                        .zip(&configs)
                        .filter(move |(_, c)| c.core_type == t)
                        .filter_map(|(v, _)| *v)
                })
                .collect();
            (!cells.is_empty()).then(|| (t, cells.iter().sum::<f64>() / cells.len() as f64))
        })
        .collect();
    Ok(MapeTable {
        configs,
        rows,
        cluster_averages,
    })
}

/// Pairs each reference sample with the platform model's prediction.
/// Single-core GEMM samples are compared against the single-core model,
/// matching how they are used for fitting.
pub fn compare_with_model(
    group: &str,
    platform: &PlatformModel,
    samples: &[MeasurementSample],
) -> Result<Vec<ErrorEntry>, ModelError> {
    samples
        .iter()
        .map(|s| {
            let cluster = platform.cluster(s.core_type)?;
            let predicted = match s.workload {
                Workload::Gemm(g) if s.core_count == 1 => predict_single_core(&cluster.gemm, &g),
                Workload::Gemm(g) => predict_multicore(cluster, &g, s.core_count)?,
                Workload::Fc { inputs, neurons } => predict_fc(cluster, inputs, neurons, s.core_count)?,
            };
            Ok(ErrorEntry {
                group: group.to_string(),
                config: StageConfig::new(s.core_type, s.core_count),
                predicted,
                measured: s.time,
            })
        })
        .collect()
}

/// Pairs measured `(0-based layer, config, seconds)` triples with matrix entries.
pub fn compare_with_matrix(
    group: &str,
    matrix: &TimeMatrix,
    measured: &[(usize, StageConfig, f64)],
) -> Result<Vec<ErrorEntry>, ModelError> {
    measured
        .iter()
        .map(|&(layer, config, time)| {
            if layer >= matrix.layers() || matrix.column(config).is_none() {
                return Err(ModelError::InvalidMatrix(format!(
                    "reference layer {} on {config} is outside the matrix",
                    layer + 1
                )));
            }
            Ok(ErrorEntry {
                group: group.to_string(),
                config,
                predicted: matrix.time(layer, config),
                measured: time,
            })
        })
        .collect()
}

impl MapeTable {
    pub fn average(&self, core_type: CoreType) -> Option<f64> {
        self.cluster_averages
            .iter()
            .find(|(t, _)| *t == core_type)
            .map(|(_, v)| *v)
    }

    /// Column header in the `1B .. 4s` style.
    fn header(cfg: &StageConfig) -> String {
        format!("{}{}", cfg.count, cfg.core_type)
    }

    pub fn render_text(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.group.len())
            .max()
            .unwrap_or(0)
            .max("Average".len());
        let mut out = String::new();
        let _ = write!(out, "{:<name_w$}", "CNN");
        for c in &self.configs {
            let _ = write!(out, " | {:>6}", Self::header(c));
        }
        out.push('\n');
        out.push_str(&"-".repeat(name_w + self.configs.len() * 9));
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<name_w$}", row.group);
            for cell in &row.cells {
                match cell {
                    Some(v) => {
                        let _ = write!(out, " | {v:>6.1}");
                    }
                    None => out.push_str(" |      -"),
                }
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<name_w$}", "Average");
        for (t, v) in &self.cluster_averages {
            let _ = write!(out, " | {t}: {v:.1}%");
        }
        out.push('\n');
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("group");
        for c in &self.configs {
            let _ = write!(out, ",{}", Self::header(c));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.group);
            for cell in &row.cells {
                match cell {
                    Some(v) => {
                        let _ = write!(out, ",{v:.4}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        for (t, v) in &self.cluster_averages {
            let _ = writeln!(out, "average_{},{v:.4}", t.symbol());
        }
        out
    }
}
