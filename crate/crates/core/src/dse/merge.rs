//! Stage merging: growing stages from single cores while it relieves the
//! bottleneck between a pair of neighbours.

use std::ops::Range;

use super::{clearly_greater, stage_latency, work_flow, LayerAllocation, PipelinePlan};
use crate::perfmodel::TimeMatrix;
use crate::stage::{CoreType, StageConfig};

/// True iff running both ranges on `merged` beats the slower of the two
/// original stages. Strict, so two empty stages never merge.
pub fn merge_condition(
    matrix: &TimeMatrix,
    merged: StageConfig,
    first: (StageConfig, Range<usize>),
    second: (StageConfig, Range<usize>),
) -> bool {
    debug_assert_eq!(first.1.end, second.1.start);
    let combined = first.1.start..second.1.end;
    let merged_time = stage_latency(matrix, merged, combined);
    let worst = stage_latency(matrix, first.0, first.1).max(stage_latency(matrix, second.0, second.1));
    clearly_greater(worst, merged_time)
}

/// One evaluated merge.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeEvent {
    /// Pipeline before the merge attempt.
    pub pipeline: Vec<StageConfig>,
    /// Index of the first stage of the pair.
    pub stage: usize,
    pub merged: StageConfig,
    pub accepted: bool,
    /// Allocation after the attempt (re-balanced when accepted).
    pub allocation: LayerAllocation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeTrace {
    /// Single-core pipeline and its balanced allocation.
    pub initial: PipelinePlan,
    pub events: Vec<MergeEvent>,
    /// Final pipeline before empty stages are dropped.
    pub last: PipelinePlan,
    /// Returned plan with empty stages removed.
    pub plan: PipelinePlan,
    /// True when merging ended below the initial throughput and the initial
    /// plan was returned instead.
    pub fell_back: bool,
}

/// Chooses stage configurations and the layer allocation for all layers of
/// `matrix` on `big_cores` + `small_cores` cores.
pub fn merge_stage(matrix: &TimeMatrix, big_cores: u32, small_cores: u32) -> PipelinePlan {
    merge_stage_traced(matrix, big_cores, small_cores).plan
}

/// [`merge_stage`] with every merge attempt recorded.
///
/// Starts from one single-core stage per core (Big first) balanced with
/// [`work_flow`]. Each cluster is then swept over its adjacent stage pairs in
/// order: an accepted merge re-balances and continues with the next pair, a
/// rejected one ends the sweep. Sweeps repeat per cluster, Big then Small,
/// until a full round merges nothing. If the merged result is slower than
/// the starting single-core plan, the starting plan is returned.
pub fn merge_stage_traced(matrix: &TimeMatrix, big_cores: u32, small_cores: u32) -> MergeTrace {
    assert!(big_cores + small_cores >= 1, "need at least one core");
    for (t, n) in [(CoreType::Big, big_cores), (CoreType::Small, small_cores)] {
        assert!(
            (1..=n).all(|h| matrix.column(StageConfig::new(t, h)).is_some()),
            "time matrix lacks {t}1..{t}{n}"
        );
    }
    let mut pipeline: Vec<StageConfig> = std::iter::repeat_n(StageConfig::big(1), big_cores as usize)
        .chain(std::iter::repeat_n(StageConfig::small(1), small_cores as usize))
        .collect();
    let mut alloc = work_flow(&pipeline, matrix);
    let initial = PipelinePlan::evaluate(matrix, pipeline.clone(), alloc.clone()).expect("single-core plan");
    let mut events = Vec::new();

    loop {
        let mut merged_any = false;
        for core_type in CoreType::ALL {
            while let Some(mut i) = pipeline.iter().position(|c| c.core_type == core_type) {
                let mut merged_in_sweep = false;
                while i + 1 < pipeline.len() && pipeline[i + 1].core_type == core_type {
                    let merged = StageConfig::new(core_type, pipeline[i].count + pipeline[i + 1].count);
                    let accepted = merge_condition(
                        matrix,
                        merged,
                        (pipeline[i], alloc.stage(i)),
                        (pipeline[i + 1], alloc.stage(i + 1)),
                    );
                    let before = pipeline.clone();
                    if accepted {
                        pipeline[i] = merged;
                        pipeline.remove(i + 1);
                        alloc = work_flow(&pipeline, matrix);
                    }
                    events.push(MergeEvent {
                        pipeline: before,
                        stage: i,
                        merged,
                        accepted,
                        allocation: alloc.clone(),
                    });
                    if !accepted {
                        break;
                    }
                    merged_in_sweep = true;
                    i += 1;
                }
                if !merged_in_sweep {
                    break;
                }
                merged_any = true;
            }
        }
        if !merged_any {
            break;
        }
    }

    let last = PipelinePlan::evaluate(matrix, pipeline, alloc).expect("merged plan");
    let fell_back = last.predicted_throughput < initial.predicted_throughput;
    let plan = if fell_back {
        log::warn!("stage merging lowered throughput; keeping the single-core plan");
        initial.without_empty_stages()
    } else {
        last.without_empty_stages()
    };
    MergeTrace {
        initial,
        events,
        last,
        plan,
        fell_back,
    }
}
