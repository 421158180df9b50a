//! Closed-form sizes of the pipeline design space.

use serde::{Deserialize, Serialize};

/// Which binomial the design-point sum uses for split positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountVariant {
    /// `C(W-1, p-1)`: split points between `W` layers, every stage non-empty.
    AsWritten,
    /// `C(W, p-1)`: the variant that reproduces the published 28-layer figure.
    Reported,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i + 1) as u128,
            None => return u128::MAX,
        };
    }
    acc
}

/// Number of distinct `p`-stage pipelines: Big stages first, each cluster's
/// cores split into an ordered list of non-empty stages.
pub fn count_pipelines(big_cores: u32, small_cores: u32, p: u32) -> u128 {
    if p < 2 || big_cores == 0 || small_cores == 0 {
        return 0;
    }
    let lo = 1.max(p.saturating_sub(small_cores));
    let hi = big_cores.min(p - 1);
    (lo..=hi)
        .map(|p_big| {
            binomial(big_cores as u64 - 1, p_big as u64 - 1)
                .saturating_mul(binomial(small_cores as u64 - 1, (p - p_big) as u64 - 1))
        })
        .fold(0u128, u128::saturating_add)
}

/// Number of (pipeline, layer split) design points for `layers` layers.
pub fn count_design_points(layers: u64, big_cores: u32, small_cores: u32, variant: CountVariant) -> u128 {
    let top = match variant {
        CountVariant::AsWritten => layers.saturating_sub(1),
        CountVariant::Reported => layers,
    };
    (2..=big_cores + small_cores)
        .map(|p| binomial(top, p as u64 - 1).saturating_mul(count_pipelines(big_cores, small_cores, p)))
        .fold(0u128, u128::saturating_add)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(27, 7), 888_030);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(0, 0), 1);
    }

    #[test]
    fn pipeline_counts() {
        assert_eq!(count_pipelines(4, 4, 2), 1);
        assert_eq!(count_pipelines(4, 4, 5), 20);
        let per_p: Vec<u128> = (2..=8).map(|p| count_pipelines(4, 4, p)).collect();
        assert_eq!(per_p, vec![1, 6, 15, 20, 15, 6, 1]);
        assert_eq!(per_p.iter().sum::<u128>(), 64);
        assert_eq!(count_pipelines(4, 4, 9), 0);
        assert_eq!(count_pipelines(4, 4, 1), 0);
    }

    #[test]
    fn design_point_counts() {
        assert_eq!(count_design_points(28, 4, 4, CountVariant::AsWritten), 4_272_048);
        assert_eq!(count_design_points(28, 4, 4, CountVariant::Reported), 5_379_616);
        assert_eq!(count_design_points(2, 1, 1, CountVariant::AsWritten), 1);
    }
}
