mod common;

use cnnpipe::dse::{merge_stage, merge_stage_traced, stage_latency, work_flow};
use cnnpipe::perfmodel::{build_time_matrix, fit_platform, read_measurements};
use cnnpipe::CoreType;
use common::*;

#[test]
fn generator_reproduces_shipped_fixtures() {
    let p = gen::reference_platform();
    assert_eq!(gen::platform_json(&p), fixture("platform.json"));
    assert_eq!(gen::measurements_csv(&p), fixture("measurements.csv"));
}

#[test]
fn resnet50_trace() {
    let m = matrix_for("resnet50");
    assert_eq!((m.layers(), m.configs().len()), (54, 8));
    let tr = merge_stage_traced(&m, 4, 4);
    assert!(!tr.fell_back);
    assert_eq!(
        tr.initial.notation(),
        "B1 - B1 - B1 - B1 - s1 - s1 - s1 - s1 / [1,14] - [15,27] - [28,39] - [40,49] - [50,52] - [53,53] - [54,54] - []"
    );
    let steps: Vec<String> = tr
        .events
        .iter()
        .map(|e| format!("{}{}", e.merged, if e.accepted { "+" } else { "-" }))
        .collect();
    assert_eq!(steps, ["B2+", "B2-", "B3+", "B4+", "s2+", "s2+", "s4-", "s4-"]);
    assert_eq!(tr.plan.notation(), "B4 - s2 - s2 / [1,35] - [36,44] - [45,54]");
    assert_eq!(tr.plan.bottleneck(), 0);
}

#[test]
fn resnet50_final_plan_is_work_flow_fixed_point() {
    let m = matrix_for("resnet50");
    let plan = merge_stage(&m, 4, 4);
    assert_eq!(work_flow(&plan.pipeline, &m), plan.allocation);
}

#[test]
fn alexnet_plan() {
    let plan = merge_stage(&matrix_for("alexnet"), 4, 4);
    assert_eq!(plan.notation(), "B4 - s4 / [1,9] - [10,11]");
}

#[test]
fn eleven_alexnet_layers_and_54_resnet_layers() {
    assert_eq!(network("alexnet").major_layers(), 11);
    assert_eq!(network("resnet50").major_layers(), 54);
    assert_eq!(network("mobilenet_v1").major_layers(), 28);
}

#[test]
fn fitted_platform_matches_generator() {
    let samples = read_measurements(fixture("measurements.csv").as_bytes()).unwrap();
    let (fitted, diags) = fit_platform("fitted", &samples, |_| 5).unwrap();
    let truth = platform();
    for (f, t) in fitted.clusters.iter().zip(&truth.clusters) {
        assert_eq!(f.core_type, t.core_type);
        assert_eq!(f.max_cores, 4);
        // zero terms come back as round-off, so compare against the largest coefficient
        let scale = t.gemm.beta.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for (a, b) in f.gemm.beta.iter().zip(&t.gemm.beta) {
            assert!((a - b).abs() <= 1e-9 * scale.max(b.abs()), "{a} vs {b}");
        }
        assert!((f.thread.alpha2 - t.thread.alpha2).abs() <= 1e-9 * t.thread.alpha2);
        assert!((f.thread.alpha3 - t.thread.alpha3).abs() <= 1e-9 * t.thread.alpha3);
        assert!(f.thread.alpha1.abs() <= 1e-9 * t.thread.alpha3);
        assert_eq!(f.fc.len(), t.fc.len());
        for (a, b) in f.fc.iter().zip(&t.fc) {
            assert_eq!((a.core_count, a.neurons), (b.core_count, b.neurons));
            assert!((a.coefficients.gamma1 / b.coefficients.gamma1 - 1.0).abs() < 1e-9);
            assert!((a.coefficients.gamma2 / b.coefficients.gamma2 - 1.0).abs() < 1e-9);
        }
    }
    for d in &diags {
        assert!(
            d.single_core_rms_s < 1e-12 && d.thread_rms_s < 1e-12 && d.fc_rms_s < 1e-12,
            "{d:?}"
        );
    }
    for name in ["resnet50", "alexnet"] {
        let a = merge_stage(&build_time_matrix(&network(name), &fitted).unwrap(), 4, 4);
        let b = merge_stage(&matrix_for(name), 4, 4);
        assert_eq!(a.notation(), b.notation());
    }
}

#[test]
fn initial_pipeline_leaves_trailing_stage_empty() {
    let tr = merge_stage_traced(&matrix_for("resnet50"), 4, 4);
    let a = &tr.initial.allocation;
    assert!(a.is_stage_empty(7));
    assert_eq!(a.non_empty_stages(), 7);
}

#[test]
fn merge_beats_best_single_configuration() {
    for name in PLAN_FIXTURES {
        let m = matrix_for(name);
        let plan = merge_stage(&m, 4, 4);
        let single = best_single_config(&m);
        assert!(
            plan.predicted_throughput >= single,
            "{name}: {} < {single}",
            plan.predicted_throughput
        );
        check_allocation(&plan.allocation, m.layers(), plan.pipeline.len()).unwrap();
    }
}

#[test]
fn mobilenet_heuristic_loses_to_one_cluster() {
    let m = matrix_for("mobilenet_v1");
    let plan = merge_stage(&m, 4, 4);
    assert_eq!(plan.pipeline_notation(), "B1 - B1 - B1 - B1 - s4");
    let single = best_single_config(&m);
    assert!(plan.predicted_throughput < single);
    let b4 = 1.0 / sum(&m, cnnpipe::StageConfig::big(4), 0..m.layers());
    assert_eq!(single, b4);
}

#[test]
fn stage_latencies_are_layer_sums() {
    let m = matrix_for("resnet50");
    let plan = merge_stage(&m, 4, 4);
    for (i, r) in plan.allocation.ranges().enumerate() {
        assert_eq!(plan.stage_latencies[i], stage_latency(&m, plan.pipeline[i], r.clone()));
        assert!((plan.stage_latencies[i] - sum(&m, plan.pipeline[i], r)).abs() < 1e-15);
    }
    let worst = plan.stage_latencies.iter().cloned().fold(0.0, f64::max);
    assert_eq!(plan.predicted_throughput, 1.0 / worst);
}

#[test]
fn big_cores_run_the_front_of_every_plan() {
    for name in NETWORKS {
        let plan = merge_stage(&matrix_for(name), 4, 4);
        let first_small = plan.pipeline.iter().position(|c| c.core_type == CoreType::Small);
        if let Some(i) = first_small {
            assert!(
                plan.pipeline[i..].iter().all(|c| c.core_type == CoreType::Small),
                "{name}"
            );
        }
        assert!(plan.pipeline.iter().all(|c| c.count >= 1 && c.count <= 4));
        let big: u32 = plan
            .pipeline
            .iter()
            .filter(|c| c.core_type == CoreType::Big)
            .map(|c| c.count)
            .sum();
        let small: u32 = plan
            .pipeline
            .iter()
            .filter(|c| c.core_type == CoreType::Small)
            .map(|c| c.count)
            .sum();
        assert!(big <= 4 && small <= 4, "{name}");
    }
}
