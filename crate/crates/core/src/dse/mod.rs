//! Pipeline design-space exploration.
//!
//! A pipeline is an ordered list of homogeneous stages (Big stages first),
//! and an allocation gives each stage a contiguous, possibly empty, range of
//! layers. Throughput is the reciprocal of the slowest stage's summed
//! layer time.

mod count;
mod flow;
mod merge;
mod oracle;
mod rank;

pub use count::{binomial, count_design_points, count_pipelines, CountVariant};
pub use flow::{find_split, work_flow, work_flow_traced, WorkFlowTrace};
pub use merge::{merge_condition, merge_stage, merge_stage_traced, MergeEvent, MergeTrace};
pub use oracle::{compositions, exhaustive_search, OracleLimits, OracleResult};
pub use rank::rank_stage_configs;

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perfmodel::TimeMatrix;
use crate::stage::StageConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DseError {
    #[error("every stage is empty")]
    AllStagesEmpty,
    #[error("design space has {count} design points, above the limit of {limit}")]
    TooLarge { count: u128, limit: u128 },
    #[error("stage configuration {0} is not in the time matrix")]
    MissingConfig(StageConfig),
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

/// Contiguous layer ranges per stage, stored as `p + 1` non-decreasing
/// boundaries from `0` to `W`. Stage `i` owns layers `bounds[i]..bounds[i+1]`
/// (0-based, half-open).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayerAllocation {
    bounds: Vec<usize>,
}

impl LayerAllocation {
    /// All `layers` on the first of `stages` stages.
    pub fn all_on_first(layers: usize, stages: usize) -> Self {
        assert!(stages >= 1);
        let mut bounds = vec![layers; stages + 1];
        bounds[0] = 0;
        Self { bounds }
    }

    pub fn from_bounds(bounds: Vec<usize>) -> Result<Self, DseError> {
        if bounds.len() < 2 || bounds[0] != 0 {
            return Err(DseError::InvalidAllocation(format!("bad boundary vector {bounds:?}")));
        }
        if bounds.windows(2).any(|w| w[0] > w[1]) {
            return Err(DseError::InvalidAllocation(format!("boundaries decrease: {bounds:?}")));
        }
        Ok(Self { bounds })
    }

    /// From per-stage sizes, in order.
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let mut bounds = Vec::with_capacity(sizes.len() + 1);
        bounds.push(0);
        for s in sizes {
            bounds.push(bounds.last().unwrap() + s);
        }
        Self { bounds }
    }

    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    pub(crate) fn bounds_mut(&mut self) -> &mut [usize] {
        &mut self.bounds
    }

    pub fn stages(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn layers(&self) -> usize {
        *self.bounds.last().unwrap()
    }

    pub fn stage(&self, i: usize) -> Range<usize> {
        self.bounds[i]..self.bounds[i + 1]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.bounds.windows(2).map(|w| w[0]..w[1])
    }

    pub fn is_stage_empty(&self, i: usize) -> bool {
        self.bounds[i] == self.bounds[i + 1]
    }

    pub fn non_empty_stages(&self) -> usize {
        self.ranges().filter(|r| !r.is_empty()).count()
    }

    /// 1-based inclusive ranges; `None` for empty stages.
    pub fn one_based(&self) -> Vec<Option<(usize, usize)>> {
        self.ranges()
            .map(|r| (!r.is_empty()).then(|| (r.start + 1, r.end)))
            .collect()
    }
}

impl fmt::Display for LayerAllocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .one_based()
            .into_iter()
            .map(|r| match r {
                Some((lo, hi)) => format!("[{lo},{hi}]"),
                None => "[]".into(),
            })
            .collect();
        f.write_str(&parts.join(" - "))
    }
}

/// Checks that explicit per-stage ranges are disjoint, contiguous,
/// order-preserving and cover `0..layers` exactly.
pub fn validate_ranges(ranges: &[Range<usize>], layers: usize) -> Result<(), DseError> {
    let mut owner = vec![None; layers];
    let mut last_end = 0;
    for (i, r) in ranges.iter().enumerate() {
        if r.start > r.end || r.end > layers {
            return Err(DseError::InvalidAllocation(format!("stage {} has range {r:?}", i + 1)));
        }
        if r.is_empty() {
            continue;
        }
        if r.start != last_end {
            return Err(DseError::InvalidAllocation(format!(
                "stage {} starts at layer {} but the previous stage ended at {}",
                i + 1,
                r.start + 1,
                last_end
            )));
        }
        for slot in &mut owner[r.clone()] {
            if slot.is_some() {
                return Err(DseError::InvalidAllocation(format!("stage {} overlaps another", i + 1)));
            }
            *slot = Some(i);
        }
        last_end = r.end;
    }
    if let Some(l) = owner.iter().position(Option::is_none) {
        return Err(DseError::InvalidAllocation(format!("layer {} is unassigned", l + 1)));
    }
    Ok(())
}

/// Summed time of `layers` on `cfg`, accumulated in layer order.
pub fn stage_latency(matrix: &TimeMatrix, cfg: StageConfig, layers: Range<usize>) -> f64 {
    let c = matrix.column(cfg).expect("configuration in matrix");
    layers.map(|l| matrix.row(l)[c]).sum()
}

/// `1 / max latency` over non-empty stages; empty stages report latency 0.
pub fn predicted_throughput(stage_latencies: &[f64]) -> Result<f64, DseError> {
    let worst = stage_latencies.iter().cloned().fold(0.0, f64::max);
    if worst <= 0.0 {
        return Err(DseError::AllStagesEmpty);
    }
    Ok(1.0 / worst)
}

/// Relative gap below which two stage latencies count as equal.
pub const LATENCY_TOLERANCE: f64 = 1e-12;

/// `a > b` beyond summation rounding, so layer times that are equal in exact
/// arithmetic compare equal whatever order they were added in.
pub fn clearly_greater(a: f64, b: f64) -> bool {
    a - b > LATENCY_TOLERANCE * a.abs().max(b.abs())
}

fn throughput_of(matrix: &TimeMatrix, pipeline: &[StageConfig], alloc: &LayerAllocation) -> f64 {
    let worst = pipeline
        .iter()
        .zip(alloc.ranges())
        .map(|(cfg, r)| stage_latency(matrix, *cfg, r))
        .fold(0.0, f64::max);
    1.0 / worst
}

/// A pipeline configuration with its allocation and predicted performance.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelinePlan {
    pub pipeline: Vec<StageConfig>,
    pub allocation: LayerAllocation,
    /// Seconds per stage (0 for empty stages).
    pub stage_latencies: Vec<f64>,
    /// Images per second.
    pub predicted_throughput: f64,
}

impl PipelinePlan {
    pub fn evaluate(
        matrix: &TimeMatrix,
        pipeline: Vec<StageConfig>,
        allocation: LayerAllocation,
    ) -> Result<Self, DseError> {
        if pipeline.len() != allocation.stages() {
            return Err(DseError::InvalidPlan(format!(
                "{} stages but {} allocation ranges",
                pipeline.len(),
                allocation.stages()
            )));
        }
        if allocation.layers() != matrix.layers() {
            return Err(DseError::InvalidPlan(format!(
                "allocation covers {} layers, matrix has {}",
                allocation.layers(),
                matrix.layers()
            )));
        }
        if let Some(cfg) = pipeline.iter().find(|c| matrix.column(**c).is_none()) {
            return Err(DseError::MissingConfig(*cfg));
        }
        let stage_latencies: Vec<f64> = pipeline
            .iter()
            .zip(allocation.ranges())
            .map(|(cfg, r)| stage_latency(matrix, *cfg, r))
            .collect();
        let predicted_throughput = predicted_throughput(&stage_latencies)?;
        Ok(Self {
            pipeline,
            allocation,
            stage_latencies,
            predicted_throughput,
        })
    }

    /// Same plan with empty stages removed.
    pub fn without_empty_stages(&self) -> Self {
        let keep: Vec<usize> = (0..self.pipeline.len())
            .filter(|&i| !self.allocation.is_stage_empty(i))
            .collect();
        let sizes: Vec<usize> = keep.iter().map(|&i| self.allocation.stage(i).len()).collect();
        Self {
            pipeline: keep.iter().map(|&i| self.pipeline[i]).collect(),
            allocation: LayerAllocation::from_sizes(&sizes),
            stage_latencies: keep.iter().map(|&i| self.stage_latencies[i]).collect(),
            predicted_throughput: self.predicted_throughput,
        }
    }

    /// Index of the slowest stage.
    pub fn bottleneck(&self) -> usize {
        self.stage_latencies
            .iter()
            .enumerate()
            .fold(0, |best, (i, t)| if *t > self.stage_latencies[best] { i } else { best })
    }

    /// `B4 - s2 - s2`
    pub fn pipeline_notation(&self) -> String {
        self.pipeline
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(" - ")
    }

    /// `B4 - s2 - s2 / [1,35] - [36,44] - [45,54]`
    pub fn notation(&self) -> String {
        format!("{} / {}", self.pipeline_notation(), self.allocation)
    }

    /// Human-readable per-stage table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str("stage | config | layers    | latency (ms)\n");
        out.push_str("------+--------+-----------+-------------\n");
        for (i, ((cfg, range), lat)) in self
            .pipeline
            .iter()
            .zip(self.allocation.one_based())
            .zip(&self.stage_latencies)
            .enumerate()
        {
            let layers = range.map_or("-".to_string(), |(lo, hi)| format!("[{lo},{hi}]"));
            let mark = if i == self.bottleneck() { " *" } else { "" };
            out.push_str(&format!(
                "{:>5} | {:>6} | {:<9} | {:>11.3}{mark}\n",
                i + 1,
                cfg.to_string(),
                layers,
                lat * 1e3
            ));
        }
        out.push_str(&format!(
            "throughput: {:.3} img/s  ({})\n",
            self.predicted_throughput,
            self.notation()
        ));
        out
    }

    pub fn to_document(&self) -> PlanDocument {
        PlanDocument {
            schema: 1,
            pipeline: self.pipeline.clone(),
            allocation: self
                .allocation
                .one_based()
                .into_iter()
                .map(|r| r.map_or(Vec::new(), |(lo, hi)| vec![lo, hi]))
                .collect(),
            predicted_throughput_ips: self.predicted_throughput,
            stage_latencies_ms: self.stage_latencies.iter().map(|t| t * 1e3).collect(),
            notation: self.notation(),
            extra: serde_json::Map::new(),
        }
    }
}

/// Serialized plan. `extra` carries provenance such as the seed and input
/// digests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub schema: u32,
    pub pipeline: Vec<StageConfig>,
    /// `[lo, hi]` per stage, 1-based inclusive; `[]` for an empty stage.
    pub allocation: Vec<Vec<usize>>,
    pub predicted_throughput_ips: f64,
    pub stage_latencies_ms: Vec<f64>,
    #[serde(default)]
    pub notation: String,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl PlanDocument {
    pub fn from_json(text: &str) -> Result<Self, DseError> {
        let doc: Self = serde_json::from_str(text).map_err(|e| DseError::InvalidPlan(e.to_string()))?;
        if doc.schema != 1 {
            return Err(DseError::InvalidPlan(format!("unsupported schema {}", doc.schema)));
        }
        if doc.pipeline.len() != doc.allocation.len() || doc.pipeline.len() != doc.stage_latencies_ms.len() {
            return Err(DseError::InvalidPlan(
                "pipeline, allocation and latency lengths differ".into(),
            ));
        }
        if doc.stage_latencies_ms.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(DseError::InvalidPlan("stage latencies must be non-negative".into()));
        }
        Ok(doc)
    }

    /// Stage latencies in seconds, skipping empty stages.
    pub fn stage_times(&self) -> Vec<f64> {
        self.allocation
            .iter()
            .zip(&self.stage_latencies_ms)
            .filter(|(r, _)| !r.is_empty())
            .map(|(_, t)| t / 1e3)
            .collect()
    }
}
