//! Micro-benchmark measurement CSV.
//!
//! Header: `kind,n,k,m,in,out,core_type,core_count,time_s`. GEMM rows fill
//! `n,k,m` and leave `in,out` empty; fully-connected rows do the opposite.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netdesc::GemmDims;
use crate::stage::CoreType;

pub const CSV_COLUMNS: [&str; 9] = ["kind", "n", "k", "m", "in", "out", "core_type", "core_count", "time_s"];

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("measurement CSV is missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("no samples")]
    NoSamples,
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Workload {
    Gemm(GemmDims),
    Fc { inputs: u64, neurons: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSample {
    pub workload: Workload,
    pub core_type: CoreType,
    pub core_count: u32,
    /// Seconds.
    pub time: f64,
}

impl MeasurementSample {
    pub fn gemm(g: GemmDims, core_type: CoreType, core_count: u32, time: f64) -> Self {
        Self {
            workload: Workload::Gemm(g),
            core_type,
            core_count,
            time,
        }
    }

    pub fn fc(inputs: u64, neurons: u64, core_type: CoreType, core_count: u32, time: f64) -> Self {
        Self {
            workload: Workload::Fc { inputs, neurons },
            core_type,
            core_count,
            time,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    kind: String,
    n: Option<u64>,
    k: Option<u64>,
    m: Option<u64>,
    #[serde(rename = "in")]
    inputs: Option<u64>,
    out: Option<u64>,
    core_type: String,
    core_count: u32,
    time_s: f64,
}

impl Record {
    fn into_sample(self, row: usize) -> Result<MeasurementSample, MeasurementError> {
        let bad = |message: String| MeasurementError::Row { row, message };
        let positive = |name: &str, v: Option<u64>| match v {
            Some(v) if v >= 1 => Ok(v),
            Some(_) => Err(bad(format!("`{name}` must be >= 1"))),
            None => Err(bad(format!("`{name}` is required for {} rows", self.kind))),
        };
        let workload = match self.kind.trim() {
            "gemm" | "conv" => Workload::Gemm(GemmDims::new(
                positive("n", self.n)?,
                positive("k", self.k)?,
                positive("m", self.m)?,
            )),
            "fc" => Workload::Fc {
                inputs: positive("in", self.inputs)?,
                neurons: positive("out", self.out)?,
            },
            other => return Err(bad(format!("unknown kind `{other}` (expected gemm or fc)"))),
        };
        let core_type = self.core_type.parse().map_err(bad)?;
        if self.core_count == 0 {
            return Err(bad("`core_count` must be >= 1".into()));
        }
        if !(self.time_s > 0.0 && self.time_s.is_finite()) {
            return Err(bad(format!("`time_s` must be positive, got {}", self.time_s)));
        }
        Ok(MeasurementSample {
            workload,
            core_type,
            core_count: self.core_count,
            time: self.time_s,
        })
    }
}

pub fn read_measurements<R: Read>(reader: R) -> Result<Vec<MeasurementSample>, MeasurementError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(MeasurementError::NoSamples);
    }
    for col in CSV_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(MeasurementError::MissingColumn(col));
        }
    }
    let mut samples = Vec::new();
    for (i, rec) in rdr.deserialize::<Record>().enumerate() {
        // header is line 1
        let row = i + 2;
        let rec = rec.map_err(|e| MeasurementError::Row {
            row,
            message: e.to_string(),
        })?;
        samples.push(rec.into_sample(row)?);
    }
    if samples.is_empty() {
        return Err(MeasurementError::NoSamples);
    }
    Ok(samples)
}

pub fn write_measurements<W: Write>(writer: W, samples: &[MeasurementSample]) -> Result<(), MeasurementError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for s in samples {
        let (kind, gemm, fc) = match s.workload {
            Workload::Gemm(g) => ("gemm", Some(g), None),
            Workload::Fc { inputs, neurons } => ("fc", None, Some((inputs, neurons))),
        };
        wtr.serialize(Record {
            kind: kind.into(),
            n: gemm.map(|g| g.n),
            k: gemm.map(|g| g.k),
            m: gemm.map(|g| g.m),
            inputs: fc.map(|f| f.0),
            out: fc.map(|f| f.1),
            core_type: s.core_type.symbol().into(),
            core_count: s.core_count,
            time_s: s.time,
        })?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_mixed_rows() {
        let text = "kind,n,k,m,in,out,core_type,core_count,time_s\n\
                    gemm,784,288,64,,,B,1,0.0123\n\
                    fc,,,,4096,1000,s,2,0.004\n";
        let samples = read_measurements(text.as_bytes()).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].workload, Workload::Gemm(GemmDims::new(784, 288, 64)));
        assert_eq!(
            samples[1].workload,
            Workload::Fc {
                inputs: 4096,
                neurons: 1000
            }
        );
        assert_eq!(samples[1].core_type, CoreType::Small);
    }

    #[test]
    fn missing_column_is_named() {
        let text = "kind,n,k,m,in,out,core_type,time_s\ngemm,1,1,1,,,B,0.1\n";
        match read_measurements(text.as_bytes()) {
            Err(MeasurementError::MissingColumn("core_count")) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_only_has_no_samples() {
        let text = "kind,n,k,m,in,out,core_type,core_count,time_s\n";
        assert!(matches!(
            read_measurements(text.as_bytes()),
            Err(MeasurementError::NoSamples)
        ));
        assert!(matches!(
            read_measurements("".as_bytes()),
            Err(MeasurementError::NoSamples)
        ));
    }

    #[test]
    fn non_positive_time_rejected() {
        let text = "kind,n,k,m,in,out,core_type,core_count,time_s\ngemm,1,1,1,,,B,1,0\n";
        assert!(matches!(
            read_measurements(text.as_bytes()),
            Err(MeasurementError::Row { row: 2, .. })
        ));
    }

    #[test]
    fn write_then_read() {
        let samples = vec![
            MeasurementSample::gemm(GemmDims::new(3, 4, 5), CoreType::Big, 3, 1.5e-3),
            MeasurementSample::fc(9216, 4096, CoreType::Small, 1, 0.25),
        ];
        let mut buf = Vec::new();
        write_measurements(&mut buf, &samples).unwrap();
        assert_eq!(read_measurements(buf.as_slice()).unwrap(), samples);
    }
}
