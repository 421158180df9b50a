mod common;

use cnnpipe::dse::{
    count_design_points, count_pipelines, exhaustive_search, find_split, merge_stage, merge_stage_traced,
    rank_stage_configs, work_flow, work_flow_traced, CountVariant, OracleLimits, PipelinePlan,
};
use cnnpipe::{StageConfig, TimeMatrix};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The split rule written out directly, totals recomputed at every step.
fn reference_split(fast: &[f64], slow: &[f64]) -> usize {
    let mut keep = fast.len();
    while keep > 0 {
        let j = keep - 1;
        let fast_total: f64 = fast[..keep].iter().sum();
        let slow_total: f64 = slow[keep..].iter().sum();
        if fast_total - fast[j] > slow_total + slow[j] {
            keep = j;
        } else {
            break;
        }
    }
    keep
}

fn matrix_strategy(max_w: usize, big: u32, small: u32) -> impl Strategy<Value = TimeMatrix> {
    let cols = (big + small) as usize;
    prop_oneof![
        prop::collection::vec(prop::collection::vec(0.1f64..10.0, cols), 1..=max_w)
            .prop_map(move |rows| TimeMatrix::new(configs(big, small), rows).unwrap()),
        (any::<u64>(), 1..=max_w)
            .prop_map(move |(seed, w)| { structured_matrix(&mut ChaCha8Rng::seed_from_u64(seed), w, big, small) }),
    ]
}

fn single_core_pipeline(big: u32, small: u32) -> Vec<StageConfig> {
    std::iter::repeat_n(StageConfig::big(1), big as usize)
        .chain(std::iter::repeat_n(StageConfig::small(1), small as usize))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn find_split_matches_literal_algorithm(
        times in prop::collection::vec((0u32..20, 0u32..20), 0..16)
    ) {
        // integer-valued times keep every sum exact
        let fast: Vec<f64> = times.iter().map(|t| t.0 as f64).collect();
        let slow: Vec<f64> = times.iter().map(|t| t.1 as f64).collect();
        prop_assert_eq!(find_split(&fast, &slow), reference_split(&fast, &slow));
    }

    #[test]
    fn find_split_never_raises_the_bottleneck(
        times in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..20)
    ) {
        let fast: Vec<f64> = times.iter().map(|t| t.0).collect();
        let slow: Vec<f64> = times.iter().map(|t| t.1).collect();
        let keep = find_split(&fast, &slow);
        prop_assert!(keep <= fast.len());
        let a: f64 = fast[..keep].iter().sum();
        let b: f64 = slow[keep..].iter().sum();
        let before: f64 = fast.iter().sum();
        prop_assert!(a.max(b) <= before * (1.0 + 1e-12));
    }

    #[test]
    fn work_flow_allocations_are_valid(m in matrix_strategy(30, 4, 4), pick in any::<prop::sample::Index>()) {
        let pipelines = all_pipelines(4, 4);
        let p = pick.get(&pipelines);
        let alloc = work_flow(p, &m);
        prop_assert_eq!(check_allocation(&alloc, m.layers(), p.len()), Ok(()));
    }

    #[test]
    fn converged_work_flow_is_pairwise_stable(m in matrix_strategy(30, 4, 4), pick in any::<prop::sample::Index>()) {
        let pipelines = all_pipelines(4, 4);
        let p = pick.get(&pipelines);
        let tr = work_flow_traced(p, &m);
        prop_assume!(tr.converged);
        let b = tr.allocation.bounds();
        for i in 0..p.len() - 1 {
            let fast: Vec<f64> = (b[i]..b[i + 2]).map(|l| m.time(l, p[i])).collect();
            let slow: Vec<f64> = (b[i]..b[i + 2]).map(|l| m.time(l, p[i + 1])).collect();
            prop_assert_eq!(b[i] + find_split(&fast, &slow), b[i + 1], "pair {}", i);
        }
    }

    #[test]
    fn merge_plans_are_valid_and_beat_the_initial_fixed_point(m in matrix_strategy(30, 4, 4)) {
        let plan = merge_stage(&m, 4, 4);
        prop_assert_eq!(check_allocation(&plan.allocation, m.layers(), plan.pipeline.len()), Ok(()));
        prop_assert!(plan.allocation.non_empty_stages() == plan.pipeline.len());
        let start = single_core_pipeline(4, 4);
        let initial = PipelinePlan::evaluate(&m, start.clone(), work_flow(&start, &m)).unwrap();
        prop_assert!(plan.predicted_throughput >= initial.predicted_throughput);
        let used_big: u32 = plan.pipeline.iter().filter(|c| c.core_type == cnnpipe::CoreType::Big).map(|c| c.count).sum();
        let used_small: u32 = plan.pipeline.iter().filter(|c| c.core_type == cnnpipe::CoreType::Small).map(|c| c.count).sum();
        prop_assert!(used_big <= 4 && used_small <= 4);
    }

    #[test]
    fn every_merge_event_allocation_is_valid(m in matrix_strategy(20, 3, 3)) {
        let tr = merge_stage_traced(&m, 3, 3);
        for e in &tr.events {
            prop_assert_eq!(check_allocation(&e.allocation, m.layers(), e.allocation.stages()), Ok(()));
        }
    }

    #[test]
    fn oracle_dominates_heuristic(m in matrix_strategy(8, 2, 2)) {
        let heuristic = merge_stage(&m, 2, 2);
        let oracle = exhaustive_search(&m, 2, 2, OracleLimits::default()).unwrap();
        prop_assert!(oracle.plan.predicted_throughput >= heuristic.predicted_throughput);
        prop_assert_eq!(check_allocation(&oracle.plan.allocation, m.layers(), oracle.plan.pipeline.len()), Ok(()));
    }

    #[test]
    fn oracle_equals_brute_force(m in matrix_strategy(6, 2, 2)) {
        let oracle = exhaustive_search(&m, 2, 2, OracleLimits::default()).unwrap();
        prop_assert_eq!(oracle.plan.predicted_throughput, brute_force_best(&m, 2, 2));
    }

    #[test]
    fn oracle_is_independent_of_worker_count(m in matrix_strategy(7, 2, 2)) {
        let one = exhaustive_search(&m, 2, 2, OracleLimits::default()).unwrap();
        let three = exhaustive_search(&m, 2, 2, OracleLimits { jobs: 3, ..Default::default() }).unwrap();
        prop_assert_eq!(one, three);
    }

    #[test]
    fn ranking_lists_every_config_once(m in matrix_strategy(12, 4, 4)) {
        let mut ranked = rank_stage_configs(&m);
        prop_assert_eq!(ranked.len(), 8);
        ranked.sort();
        ranked.dedup();
        prop_assert_eq!(ranked.len(), 8);
    }
}

#[test]
fn counts_match_enumeration() {
    for big in 1..=3u32 {
        for small in 1..=3u32 {
            let pipelines = all_pipelines(big, small);
            for p in 2..=big + small {
                let by_len = pipelines.iter().filter(|x| x.len() == p as usize).count() as u128;
                assert_eq!(count_pipelines(big, small, p), by_len, "({big},{small},{p})");
            }
            for w in 2..=8usize {
                let (written, reported) = brute_force_design_points(w, big, small);
                assert_eq!(
                    count_design_points(w as u64, big, small, CountVariant::AsWritten),
                    written
                );
                assert_eq!(
                    count_design_points(w as u64, big, small, CountVariant::Reported),
                    reported
                );
            }
        }
    }
}

#[test]
fn oracle_counts_every_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for w in 1..=7 {
        let m = unstructured_matrix(&mut rng, w, 2, 2);
        let r = exhaustive_search(&m, 2, 2, OracleLimits::default()).unwrap();
        let total: u128 = all_pipelines(2, 2)
            .iter()
            .map(|p| all_bounds(w, p.len()).len() as u128)
            .sum();
        assert_eq!(r.design_points + r.degenerate_points, total);
        assert_eq!(
            r.design_points,
            count_design_points(w as u64, 2, 2, CountVariant::AsWritten)
        );
    }
}
