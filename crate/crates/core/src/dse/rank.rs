use std::cmp::Ordering;

use crate::perfmodel::TimeMatrix;
use crate::stage::StageConfig;

/// Orders stage configurations from most to least capable.
///
/// Each layer's times are normalized by that layer's fastest configuration;
/// configurations sort by the mean normalized time. Ties go Big before Small,
/// then to the larger core count.
pub fn rank_stage_configs(matrix: &TimeMatrix) -> Vec<StageConfig> {
    let configs = matrix.configs();
    let mut scores = vec![0.0f64; configs.len()];
    for l in 0..matrix.layers() {
        let row = matrix.row(l);
        let best = row.iter().cloned().fold(f64::INFINITY, f64::min);
        for (s, t) in scores.iter_mut().zip(row) {
            *s += t / best;
        }
    }
    let w = matrix.layers() as f64;
    let mut ranked: Vec<(StageConfig, f64)> = configs.iter().copied().zip(scores.into_iter().map(|s| s / w)).collect();
    ranked.sort_by(|(a, sa), (b, sb)| {
        sa.partial_cmp(sb)
            .unwrap_or(Ordering::Equal)
            .then(a.core_type.cmp(&b.core_type))
            .then(b.count.cmp(&a.count))
    });
    ranked.into_iter().map(|(c, _)| c).collect()
}
