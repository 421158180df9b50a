//! Workload flow: balancing contiguous layer ranges across adjacent stages.

use std::collections::HashSet;

use super::{clearly_greater, throughput_of, LayerAllocation};
use crate::perfmodel::TimeMatrix;
use crate::stage::StageConfig;

/// Splits a contiguous workload between a stage and its successor.
///
/// Starts with everything on the first stage and moves layers, last first,
/// while the first stage stays strictly slower than the second after the
/// move (see [`clearly_greater`]). Returns the number of layers kept on the first stage.
pub fn find_split(t_first: &[f64], t_second: &[f64]) -> usize {
    assert_eq!(t_first.len(), t_second.len());
    let n = t_first.len();
    // prefix sums of the first stage, accumulated front to back
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for t in t_first {
        prefix.push(prefix.last().unwrap() + t);
    }
    let mut keep = n;
    let mut second = 0.0;
    for j in (0..n).rev() {
        let first_after = prefix[j];
        let second_after = second + t_second[j];
        if clearly_greater(first_after, second_after) {
            keep = j;
            second = second_after;
        } else {
            break;
        }
    }
    keep
}

/// Allocation after each sweep of a [`work_flow`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkFlowTrace {
    pub sweeps: Vec<LayerAllocation>,
    pub allocation: LayerAllocation,
    /// `false` when the sweep cap or a revisited state ended the loop.
    pub converged: bool,
}

/// Balances all layers of `matrix` over `pipeline`.
pub fn work_flow(pipeline: &[StageConfig], matrix: &TimeMatrix) -> LayerAllocation {
    work_flow_traced(pipeline, matrix).allocation
}

/// [`work_flow`] that also records every sweep.
///
/// Runs full sweeps over adjacent stage pairs until a sweep changes nothing.
/// Stops after `W * p` sweeps or on a repeated allocation and then returns
/// the best allocation seen.
pub fn work_flow_traced(pipeline: &[StageConfig], matrix: &TimeMatrix) -> WorkFlowTrace {
    let w = matrix.layers();
    let p = pipeline.len();
    let columns: Vec<Vec<f64>> = pipeline.iter().map(|c| matrix.column_times(*c)).collect();
    let mut alloc = LayerAllocation::all_on_first(w, p);
    let mut sweeps = Vec::new();
    let mut seen = HashSet::new();
    seen.insert(alloc.clone());
    let cap = (w * p).max(1);
    let mut converged = false;

    for _ in 0..cap {
        let before = alloc.clone();
        for i in 0..p.saturating_sub(1) {
            let bounds = alloc.bounds_mut();
            let (lo, hi) = (bounds[i], bounds[i + 2]);
            let keep = find_split(&columns[i][lo..hi], &columns[i + 1][lo..hi]);
            bounds[i + 1] = lo + keep;
        }
        sweeps.push(alloc.clone());
        if alloc == before {
            converged = true;
            break;
        }
        if !seen.insert(alloc.clone()) {
            break;
        }
    }

    if !converged {
        log::warn!(
            "work flow did not stabilize after {} sweeps; keeping the best allocation seen",
            sweeps.len()
        );
        let best = sweeps
            .iter()
            .fold(None::<(f64, &LayerAllocation)>, |best, a| {
                let tp = throughput_of(matrix, pipeline, a);
                match best {
                    Some((b, _)) if b >= tp => best,
                    _ => Some((tp, a)),
                }
            })
            .map(|(_, a)| a.clone());
        alloc = best.unwrap_or(alloc);
    }
    WorkFlowTrace {
        sweeps,
        allocation: alloc,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_traced_split() {
        // move l4 (9 > 2), move l3 (7 > 6), stop at l2 (4 > 12 fails)
        assert_eq!(find_split(&[4.0, 3.0, 2.0, 1.0], &[8.0, 6.0, 4.0, 2.0]), 2);
    }

    #[test]
    fn zero_times_never_move() {
        assert_eq!(find_split(&[0.0; 3], &[0.0; 3]), 3);
    }

    #[test]
    fn single_layer_stays() {
        assert_eq!(find_split(&[5.0], &[9.0]), 1);
        assert_eq!(find_split(&[], &[]), 0);
    }

    #[test]
    fn strict_inequality_skips_equal_improvement() {
        // T_A = 10 over two 5-unit layers; moving the last one to B gives
        // 5 vs 5, which would halve the bottleneck but fails the strict test.
        assert_eq!(find_split(&[5.0, 5.0], &[5.0, 5.0]), 2);
        assert_eq!(find_split(&[5.0, 5.0], &[10.0, 5.0]), 2);
    }

    fn uniform_matrix(w: usize, configs: &[StageConfig], t: f64) -> TimeMatrix {
        TimeMatrix::new(configs.to_vec(), vec![vec![t; configs.len()]; w]).unwrap()
    }

    #[test]
    fn two_stage_flow_equals_one_split() {
        let pipeline = [StageConfig::big(1), StageConfig::small(1)];
        let rows: Vec<Vec<f64>> = (0..7).map(|l| vec![1.0 + l as f64, 2.0 + 1.5 * l as f64]).collect();
        let m = TimeMatrix::new(pipeline.to_vec(), rows).unwrap();
        let keep = find_split(&m.column_times(pipeline[0]), &m.column_times(pipeline[1]));
        assert_eq!(work_flow(&pipeline, &m).bounds(), &[0, keep, 7]);
    }

    #[test]
    fn uniform_times_stop_one_layer_short_of_even() {
        let pipeline = [StageConfig::big(1), StageConfig::small(1)];
        for n in [1usize, 2, 5, 15] {
            let w = 2 * n;
            let m = uniform_matrix(w, &pipeline, 1.0);
            let alloc = work_flow(&pipeline, &m);
            // the even split needs a move that ends at n vs n, which the
            // strict comparison rejects
            assert_eq!(alloc.stage(0).len(), n + 1);
            let best = (0..=w).map(|k| k.max(w - k)).min().unwrap();
            assert_eq!(best, n);
            assert_eq!(alloc.stage(0).len().max(alloc.stage(1).len()), best + 1);
        }
    }

    #[test]
    fn single_stage_keeps_everything() {
        let m = uniform_matrix(3, &[StageConfig::big(4)], 1.0);
        assert_eq!(work_flow(&[StageConfig::big(4)], &m).bounds(), &[0, 3]);
    }
}
