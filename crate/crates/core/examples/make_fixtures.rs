//! Writes the reference platform and its noiseless measurement sweep.
//!
//! ```text
//! cargo run -p cnnpipe-core --example make_fixtures [-- OUT_DIR]
//! ```

use std::path::PathBuf;

use cnnpipe::perfmodel::{
    predict_fc, predict_multicore, predict_single_core, write_measurements, ClusterModel, FcCoefficients, FcEntry,
    GemmCoefficients, MeasurementSample, PlatformModel, ThreadCoefficients,
};
use cnnpipe::{CoreType, GemmDims};

const FC_CLASSES: [u64; 2] = [1000, 4096];
const FC_INPUTS: [u64; 4] = [1024, 2048, 4096, 9216];

/// Four significant digits.
fn sig4(x: f64) -> f64 {
    format!("{x:.3e}").parse().unwrap()
}

fn cluster(core_type: CoreType, gemm: [f64; 8], thread: [f64; 3], fc_per_mac: f64) -> ClusterModel {
    let mac = gemm[6];
    let fc = (1..=4u32)
        .flat_map(|h| {
            FC_CLASSES.map(|neurons| FcEntry {
                core_count: h,
                neurons,
                coefficients: FcCoefficients {
                    gamma1: sig4(mac * fc_per_mac / (h as f64).powf(0.7)),
                    gamma2: thread[2],
                },
            })
        })
        .collect();
    ClusterModel {
        core_type,
        max_cores: 4,
        tile_size: 5,
        gemm: GemmCoefficients::new(gemm),
        thread: ThreadCoefficients {
            alpha1: thread[0],
            alpha2: thread[1],
            alpha3: thread[2],
        },
        fc,
    }
}

/// Four Big and four Small cores.
pub fn reference_platform() -> PlatformModel {
    let big = cluster(
        CoreType::Big,
        [0.0, 0.0, 0.0, 1.15e-11, 0.0, 4.46e-9, 1.1e-10, 4.4e-5],
        [0.0, 1.33e-7, 1.31e-4],
        2.8,
    );
    let small = cluster(
        CoreType::Small,
        [0.0, 0.0, 0.0, 2.35e-10, 0.0, 3.9e-11, 2.156e-10, 5.5e-4],
        [0.0, 5.7e-6, 9.5e-5],
        5.6,
    );
    PlatformModel::new("reference-4b4s", vec![big, small]).unwrap()
}

/// Same-padded stride-1 convolutions over image sizes, filter sizes and
/// depths, then fully-connected layers, on every core count.
pub fn sweep(platform: &PlatformModel) -> Vec<MeasurementSample> {
    let mut out = Vec::new();
    for c in &platform.clusters {
        for i in [7u64, 14, 28, 56, 112] {
            for f in [1u64, 3, 5, 7, 11] {
                for d_in in [32u64, 128, 256] {
                    for d_out in [32u64, 64, 256] {
                        let g = GemmDims::new(i * i, f * f * d_in, d_out);
                        out.push(MeasurementSample::gemm(
                            g,
                            c.core_type,
                            1,
                            predict_single_core(&c.gemm, &g),
                        ));
                        for h in 2..=c.max_cores {
                            let t = predict_multicore(c, &g, h).unwrap();
                            out.push(MeasurementSample::gemm(g, c.core_type, h, t));
                        }
                    }
                }
            }
        }
        for neurons in FC_CLASSES {
            for inputs in FC_INPUTS {
                for h in 1..=c.max_cores {
                    let t = predict_fc(c, inputs, neurons, h).unwrap();
                    out.push(MeasurementSample::fc(inputs, neurons, c.core_type, h, t));
                }
            }
        }
    }
    out
}

pub fn platform_json(platform: &PlatformModel) -> String {
    let mut doc = serde_json::Map::new();
    doc.insert("schema".into(), 1.into());
    if let serde_json::Value::Object(m) = serde_json::to_value(platform).unwrap() {
        doc.extend(m);
    }
    let mut text = serde_json::to_string_pretty(&doc).unwrap();
    text.push('\n');
    text
}

pub fn measurements_csv(platform: &PlatformModel) -> String {
    let mut buf = Vec::new();
    write_measurements(&mut buf, &sweep(platform)).unwrap();
    String::from_utf8(buf).unwrap()
}

#[allow(dead_code)]
fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    let platform = reference_platform();
    std::fs::write(dir.join("platform.json"), platform_json(&platform)).unwrap();
    std::fs::write(dir.join("measurements.csv"), measurements_csv(&platform)).unwrap();
}
