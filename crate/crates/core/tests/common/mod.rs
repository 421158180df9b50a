#![allow(dead_code)]

use std::ops::Range;
use std::path::PathBuf;

use cnnpipe::netdesc::parse_network;
use cnnpipe::perfmodel::build_time_matrix;
use cnnpipe::{CoreType, LayerAllocation, NetworkModel, PlatformModel, StageConfig, TimeMatrix};
use rand::Rng;

#[path = "../../examples/make_fixtures.rs"]
pub mod gen;

pub const NETWORKS: [&str; 7] = ["resnet50", "alexnet", "vgg16", "mobilenet_v1", "toy6", "pair", "single"];

/// Networks on which the heuristic beats every single-configuration run.
/// `mobilenet_v1` is the exception, see `mobilenet_heuristic_loses_to_one_cluster`.
pub const PLAN_FIXTURES: [&str; 6] = ["resnet50", "alexnet", "vgg16", "toy6", "pair", "single"];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn network(name: &str) -> NetworkModel {
    parse_network(&fixture(&format!("{name}.json"))).unwrap()
}

pub fn platform() -> PlatformModel {
    PlatformModel::from_json(&fixture("platform.json")).unwrap()
}

pub fn matrix_for(name: &str) -> TimeMatrix {
    build_time_matrix(&network(name), &platform()).unwrap()
}

pub fn configs(big: u32, small: u32) -> Vec<StageConfig> {
    (1..=big)
        .map(StageConfig::big)
        .chain((1..=small).map(StageConfig::small))
        .collect()
}

/// Times that fall with core count and favour Big cores by a per-layer factor.
pub fn structured_matrix(rng: &mut impl Rng, w: usize, big: u32, small: u32) -> TimeMatrix {
    let cfgs = configs(big, small);
    let rows = (0..w)
        .map(|_| {
            let base = rng.random_range(0.5..20.0);
            let slowdown = rng.random_range(1.2..4.0);
            let scaling = rng.random_range(0.5..1.0);
            let overhead = rng.random_range(0.0..0.5);
            cfgs.iter()
                .map(|c| {
                    let t = if c.core_type == CoreType::Big {
                        base
                    } else {
                        base * slowdown
                    };
                    t / (c.count as f64).powf(scaling) + overhead
                })
                .collect()
        })
        .collect();
    TimeMatrix::new(cfgs, rows).unwrap()
}

/// Independent positive entries with no structure at all.
pub fn unstructured_matrix(rng: &mut impl Rng, w: usize, big: u32, small: u32) -> TimeMatrix {
    let cfgs = configs(big, small);
    let rows = (0..w)
        .map(|_| cfgs.iter().map(|_| rng.random_range(0.1..10.0)).collect())
        .collect();
    TimeMatrix::new(cfgs, rows).unwrap()
}

pub fn random_matrix(rng: &mut impl Rng, w: usize, big: u32, small: u32) -> TimeMatrix {
    if rng.random_bool(0.5) {
        structured_matrix(rng, w, big, small)
    } else {
        unstructured_matrix(rng, w, big, small)
    }
}

/// Contiguous, disjoint, in order and covering `0..w`.
pub fn check_allocation(alloc: &LayerAllocation, w: usize, stages: usize) -> Result<(), String> {
    let ranges: Vec<Range<usize>> = alloc.ranges().collect();
    if ranges.len() != stages {
        return Err(format!("{} ranges for {stages} stages", ranges.len()));
    }
    let mut next = 0;
    for (i, r) in ranges.iter().enumerate() {
        if r.start != next {
            return Err(format!("stage {i} starts at {} instead of {next}", r.start));
        }
        if r.end < r.start {
            return Err(format!("stage {i} is reversed"));
        }
        next = r.end;
    }
    if next != w {
        return Err(format!("covers {next} of {w} layers"));
    }
    Ok(())
}

pub fn sum(matrix: &TimeMatrix, cfg: StageConfig, r: Range<usize>) -> f64 {
    r.map(|l| matrix.time(l, cfg)).sum()
}

/// Slowest non-empty stage.
pub fn bottleneck(matrix: &TimeMatrix, pipeline: &[StageConfig], bounds: &[usize]) -> f64 {
    pipeline
        .iter()
        .enumerate()
        .map(|(i, c)| sum(matrix, *c, bounds[i]..bounds[i + 1]))
        .fold(0.0, f64::max)
}

/// Ordered splits of `n` cores into non-empty stages, via the `n - 1` gaps.
pub fn core_splits(n: u32) -> Vec<Vec<u32>> {
    if n == 0 {
        return vec![vec![]];
    }
    (0..1u32 << (n - 1))
        .map(|mask| {
            let mut parts = vec![];
            let mut run = 1;
            for gap in 0..n - 1 {
                if mask >> gap & 1 == 1 {
                    parts.push(run);
                    run = 1;
                } else {
                    run += 1;
                }
            }
            parts.push(run);
            parts
        })
        .collect()
}

/// Every Big-then-Small pipeline that uses all cores.
pub fn all_pipelines(big: u32, small: u32) -> Vec<Vec<StageConfig>> {
    let mut out = vec![];
    for b in core_splits(big) {
        for s in core_splits(small) {
            let p: Vec<StageConfig> = b
                .iter()
                .map(|&c| StageConfig::big(c))
                .chain(s.iter().map(|&c| StageConfig::small(c)))
                .collect();
            if !p.is_empty() {
                out.push(p);
            }
        }
    }
    out
}

/// Every non-decreasing boundary vector `0 = b0 <= .. <= bp = w`.
pub fn all_bounds(w: usize, stages: usize) -> Vec<Vec<usize>> {
    fn go(w: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 1 {
            cur.push(w);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        let from = *cur.last().unwrap();
        for b in from..=w {
            cur.push(b);
            go(w, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = vec![];
    go(w, stages, &mut vec![0], &mut out);
    out
}

/// Best throughput over every pipeline and every split, empty stages allowed.
pub fn brute_force_best(matrix: &TimeMatrix, big: u32, small: u32) -> f64 {
    let mut best = 0.0f64;
    for p in all_pipelines(big, small) {
        for b in all_bounds(matrix.layers(), p.len()) {
            best = best.max(1.0 / bottleneck(matrix, &p, &b));
        }
    }
    best
}

/// Whole network on one configuration.
pub fn best_single_config(matrix: &TimeMatrix) -> f64 {
    matrix
        .configs()
        .iter()
        .map(|c| 1.0 / sum(matrix, *c, 0..matrix.layers()))
        .fold(0.0, f64::max)
}

/// Design points by enumeration: `(as written, reported)`. As written needs
/// every stage non-empty; reported lets the last stage be empty.
pub fn brute_force_design_points(w: usize, big: u32, small: u32) -> (u128, u128) {
    let (mut written, mut reported) = (0u128, 0u128);
    for p in all_pipelines(big, small) {
        let n = p.len();
        for b in all_bounds(w, n) {
            let firsts_filled = b.windows(2).take(n - 1).all(|x| x[1] > x[0]);
            reported += u128::from(firsts_filled);
            written += u128::from(firsts_filled && b[n] > b[n - 1]);
        }
    }
    (written, reported)
}
