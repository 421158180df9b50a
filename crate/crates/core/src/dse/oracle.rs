//! Exhaustive search over every pipeline and every contiguous layer split.

use std::cmp::Ordering;

use rayon::prelude::*;

use super::{count_design_points, CountVariant, DseError, LayerAllocation, PipelinePlan};
use crate::perfmodel::TimeMatrix;
use crate::stage::{CoreType, StageConfig};

/// Ordered ways to write `n` as a sum of positive parts.
pub fn compositions(n: u32) -> Vec<Vec<u32>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 1..=n {
        for mut rest in compositions(n - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    /// Refuse when the as-written design-point count exceeds this.
    pub max_points: u128,
    /// Worker threads; 1 runs sequentially.
    pub jobs: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_points: 10_000_000,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Best plan, empty stages removed.
    pub plan: PipelinePlan,
    /// Splits evaluated with every stage non-empty.
    pub design_points: u128,
    /// Splits evaluated with at least one empty stage.
    pub degenerate_points: u128,
}

/// Per-configuration stage latency for every `start..end`, summed in layer
/// order so values match [`super::stage_latency`] bit for bit.
struct LatencyTable {
    w: usize,
    table: Vec<f64>,
}

impl LatencyTable {
    fn new(matrix: &TimeMatrix, cfg: StageConfig) -> Self {
        let w = matrix.layers();
        let col = matrix.column_times(cfg);
        let mut table = vec![0.0; (w + 1) * (w + 1)];
        for start in 0..=w {
            let mut acc = 0.0;
            for end in start + 1..=w {
                acc += col[end - 1];
                table[start * (w + 1) + end] = acc;
            }
        }
        Self { w, table }
    }

    fn get(&self, start: usize, end: usize) -> f64 {
        self.table[start * (self.w + 1) + end]
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    worst: f64,
    non_empty: usize,
    /// Boundaries with empty stages removed.
    trimmed_bounds: Vec<usize>,
    trimmed_pipeline: Vec<StageConfig>,
    pipeline: Vec<StageConfig>,
    bounds: Vec<usize>,
}

impl Candidate {
    fn new(pipeline: &[StageConfig], bounds: &[usize], worst: f64) -> Self {
        let mut trimmed_bounds = vec![0];
        let mut trimmed_pipeline = Vec::new();
        for (i, cfg) in pipeline.iter().enumerate() {
            if bounds[i + 1] > bounds[i] {
                trimmed_bounds.push(bounds[i + 1]);
                trimmed_pipeline.push(*cfg);
            }
        }
        Self {
            worst,
            non_empty: trimmed_pipeline.len(),
            trimmed_bounds,
            trimmed_pipeline,
            pipeline: pipeline.to_vec(),
            bounds: bounds.to_vec(),
        }
    }

    /// `Less` means `self` is preferred.
    fn rank(&self, other: &Self) -> Ordering {
        self.worst
            .total_cmp(&other.worst)
            .then(self.non_empty.cmp(&other.non_empty))
            .then_with(|| self.trimmed_bounds.cmp(&other.trimmed_bounds))
            .then_with(|| self.trimmed_pipeline.cmp(&other.trimmed_pipeline))
            .then_with(|| self.pipeline.cmp(&other.pipeline))
            .then_with(|| self.bounds.cmp(&other.bounds))
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    best: Option<Candidate>,
    design: u128,
    degenerate: u128,
}

impl Tally {
    fn offer(&mut self, c: Candidate) {
        if self.best.as_ref().is_none_or(|b| c.rank(b) == Ordering::Less) {
            self.best = Some(c);
        }
    }

    fn join(mut self, other: Self) -> Self {
        self.design += other.design;
        self.degenerate += other.degenerate;
        if let Some(c) = other.best {
            self.offer(c);
        }
        self
    }
}

fn pipelines(big_cores: u32, small_cores: u32) -> Vec<Vec<StageConfig>> {
    let mut out = Vec::new();
    for big in compositions(big_cores) {
        for small in compositions(small_cores) {
            let p: Vec<StageConfig> = big
                .iter()
                .map(|&c| StageConfig::new(CoreType::Big, c))
                .chain(small.iter().map(|&c| StageConfig::new(CoreType::Small, c)))
                .collect();
            if !p.is_empty() {
                out.push(p);
            }
        }
    }
    out
}

/// Depth-first over the remaining boundaries of one pipeline.
fn walk(
    tables: &[&LatencyTable],
    pipeline: &[StageConfig],
    bounds: &mut Vec<usize>,
    worst: f64,
    empties: bool,
    tally: &mut Tally,
) {
    let stage = bounds.len() - 1;
    let start = *bounds.last().unwrap();
    let w = tables[0].w;
    if stage + 1 == pipeline.len() {
        let empty = start == w;
        let worst = worst.max(tables[stage].get(start, w));
        bounds.push(w);
        if empties || empty {
            tally.degenerate += 1;
        } else {
            tally.design += 1;
        }
        if worst > 0.0 {
            tally.offer(Candidate::new(pipeline, bounds, worst));
        }
        bounds.pop();
        return;
    }
    for end in start..=w {
        bounds.push(end);
        let lat = tables[stage].get(start, end);
        walk(tables, pipeline, bounds, worst.max(lat), empties || end == start, tally);
        bounds.pop();
    }
}

/// Best plan over every Big-then-Small pipeline using all cores and every
/// contiguous split of the matrix's layers, empty stages included.
///
/// Ties go to fewer non-empty stages, then the lexicographically smallest
/// boundary vector, so the result does not depend on `limits.jobs`.
pub fn exhaustive_search(
    matrix: &TimeMatrix,
    big_cores: u32,
    small_cores: u32,
    limits: OracleLimits,
) -> Result<OracleResult, DseError> {
    let w = matrix.layers();
    let count = count_design_points(w as u64, big_cores, small_cores, CountVariant::AsWritten);
    if count > limits.max_points {
        return Err(DseError::TooLarge {
            count,
            limit: limits.max_points,
        });
    }
    let configs: Vec<StageConfig> = (1..=big_cores)
        .map(StageConfig::big)
        .chain((1..=small_cores).map(StageConfig::small))
        .collect();
    if let Some(c) = configs.iter().find(|c| matrix.column(**c).is_none()) {
        return Err(DseError::MissingConfig(*c));
    }
    let tables: Vec<(StageConfig, LatencyTable)> =
        configs.iter().map(|c| (*c, LatencyTable::new(matrix, *c))).collect();
    let lookup = |cfg: StageConfig| &tables.iter().find(|(c, _)| *c == cfg).unwrap().1;

    // one work item per (pipeline, first boundary)
    let items: Vec<(Vec<StageConfig>, usize)> = pipelines(big_cores, small_cores)
        .into_iter()
        .flat_map(|p| {
            let firsts = if p.len() == 1 { vec![w] } else { (0..=w).collect() };
            firsts.into_iter().map(move |f| (p.clone(), f))
        })
        .collect();

    let run = |(pipeline, first): &(Vec<StageConfig>, usize)| {
        let t: Vec<&LatencyTable> = pipeline.iter().map(|c| lookup(*c)).collect();
        let mut tally = Tally::default();
        if pipeline.len() == 1 {
            let worst = t[0].get(0, w);
            if w == 0 {
                tally.degenerate += 1;
            } else {
                tally.design += 1;
            }
            if worst > 0.0 {
                tally.offer(Candidate::new(pipeline, &[0, w], worst));
            }
            return tally;
        }
        let mut bounds = vec![0, *first];
        walk(&t, pipeline, &mut bounds, t[0].get(0, *first), *first == 0, &mut tally);
        tally
    };

    let tally = if limits.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(limits.jobs)
            .build()
            .map_err(|e| DseError::InvalidPlan(e.to_string()))?;
        pool.install(|| items.par_iter().map(run).reduce(Tally::default, Tally::join))
    } else {
        items.iter().map(run).fold(Tally::default(), Tally::join)
    };

    let best = tally.best.ok_or(DseError::AllStagesEmpty)?;
    let alloc = LayerAllocation::from_bounds(best.bounds)?;
    let plan = PipelinePlan::evaluate(matrix, best.pipeline, alloc)?.without_empty_stages();
    Ok(OracleResult {
        plan,
        design_points: tally.design,
        degenerate_points: tally.degenerate,
    })
}
