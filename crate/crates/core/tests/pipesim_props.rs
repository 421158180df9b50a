use cnnpipe::pipesim::{simulate, steady_state_throughput, SimSpec};
use proptest::prelude::*;

/// Multiples of 1/64 s keep every sum in the simulation exact.
fn dyadic_stages() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((1u32..=64).prop_map(|k| k as f64 / 64.0), 1..=8)
}

fn max(t: &[f64]) -> f64 {
    t.iter().cloned().fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn makespan_has_closed_form(t in dyadic_stages(), z in 1u64..300) {
        let r = simulate(&SimSpec::new(t.clone(), z)).unwrap();
        let sum: f64 = t.iter().sum();
        prop_assert_eq!(r.makespan, sum + (z - 1) as f64 * max(&t));
        for (i, c) in r.completion_times.iter().enumerate() {
            prop_assert_eq!(*c, sum + i as f64 * max(&t));
        }
    }

    #[test]
    fn throughput_rises_toward_the_bottleneck_rate(t in prop::collection::vec(0.001f64..0.5, 1..=8)) {
        let limit = steady_state_throughput(&SimSpec::new(t.clone(), 1)).unwrap();
        prop_assert_eq!(limit, 1.0 / max(&t));
        let mut last = 0.0;
        for z in [1u64, 2, 5, 10, 50, 200, 1000] {
            let got = simulate(&SimSpec::new(t.clone(), z)).unwrap().throughput;
            prop_assert!(got >= last * (1.0 - 1e-12), "z={z}: {got} < {last}");
            prop_assert!(got <= limit * (1.0 + 1e-12));
            last = got;
        }
        prop_assert!((limit - last) / limit <= 0.01);
    }

    #[test]
    fn bottleneck_stage_becomes_fully_busy(t in prop::collection::vec(0.001f64..0.5, 1..=8)) {
        let b = t.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let mut last = 0.0;
        for z in [10u64, 100, 1000, 10_000] {
            let f = simulate(&SimSpec::new(t.clone(), z)).unwrap().busy_fraction[b];
            prop_assert!(f >= last * (1.0 - 1e-12) && f <= 1.0 + 1e-12);
            last = f;
        }
        prop_assert!(last >= 0.99);
    }

    #[test]
    fn same_seed_same_run(t in prop::collection::vec(0.001f64..0.5, 1..=5), seed in any::<u64>()) {
        let spec = SimSpec::new(t, 50).with_jitter(0.2, seed);
        prop_assert_eq!(simulate(&spec).unwrap(), simulate(&spec).unwrap());
    }
}

#[test]
fn large_batches_match_steady_state() {
    let t = vec![0.035, 0.044, 0.054];
    let limit = steady_state_throughput(&SimSpec::new(t.clone(), 1)).unwrap();
    let r1000 = simulate(&SimSpec::new(t.clone(), 1000)).unwrap().throughput;
    let r10000 = simulate(&SimSpec::new(t, 10_000)).unwrap().throughput;
    assert!((limit - r1000) / limit <= 0.01);
    assert!((limit - r10000) / limit <= 0.001);
}

#[test]
fn jitter_does_not_raise_mean_throughput() {
    let t = vec![0.030, 0.050, 0.048, 0.045];
    let z = 200;
    let clean = simulate(&SimSpec::new(t.clone(), z)).unwrap().throughput;
    let runs: Vec<f64> = (0..200u64)
        .map(|seed| {
            simulate(&SimSpec::new(t.clone(), z).with_jitter(0.25, seed))
                .unwrap()
                .throughput
        })
        .collect();
    let n = runs.len() as f64;
    let mean = runs.iter().sum::<f64>() / n;
    let var = runs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!(mean <= clean + 3.0 * se, "mean {mean} vs clean {clean} (se {se})");
    assert!(mean < clean, "mean {mean} vs clean {clean}");
}
