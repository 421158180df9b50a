//! Discrete-event simulation of an image stream through a blocking pipeline.
//!
//! Each stage holds one image at a time and keeps it until the next stage
//! accepts it, so there is no buffering between stages. Without jitter the
//! makespan is `sum(t) + (Z - 1) * max(t)`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("need at least one stage")]
    NoStages,
    #[error("stage {stage} time {time} must be positive and finite")]
    StageTime { stage: usize, time: f64 },
    #[error("need at least one image")]
    NoImages,
    #[error("jitter sigma {0} must be non-negative and finite")]
    Sigma(f64),
    #[error("handoff delay {0} must be non-negative and finite")]
    Handoff(f64),
    #[error("steady-state throughput is only defined without jitter")]
    Jittered,
}

/// Log-normal multiplicative noise with mean 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    /// Standard deviation of the underlying normal.
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    /// Seconds per stage.
    pub stage_times: Vec<f64>,
    pub num_images: u64,
    #[serde(default)]
    pub jitter: Option<Jitter>,
    /// Fixed delay added to every hand-off between stages, in seconds.
    #[serde(default)]
    pub handoff_delay: f64,
}

impl SimSpec {
    pub fn new(stage_times: Vec<f64>, num_images: u64) -> Self {
        Self {
            stage_times,
            num_images,
            jitter: None,
            handoff_delay: 0.0,
        }
    }

    pub fn with_jitter(mut self, sigma: f64, seed: u64) -> Self {
        self.jitter = Some(Jitter { sigma, seed });
        self
    }

    pub fn with_handoff_delay(mut self, delay: f64) -> Self {
        self.handoff_delay = delay;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.stage_times.is_empty() {
            return Err(SimError::NoStages);
        }
        if let Some((i, t)) = self
            .stage_times
            .iter()
            .enumerate()
            .find(|(_, t)| !(t.is_finite() && **t > 0.0))
        {
            return Err(SimError::StageTime { stage: i + 1, time: *t });
        }
        if self.num_images == 0 {
            return Err(SimError::NoImages);
        }
        if let Some(j) = self.jitter {
            if !(j.sigma.is_finite() && j.sigma >= 0.0) {
                return Err(SimError::Sigma(j.sigma));
            }
        }
        if !(self.handoff_delay.is_finite() && self.handoff_delay >= 0.0) {
            return Err(SimError::Handoff(self.handoff_delay));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub makespan: f64,
    /// Images per second.
    pub throughput: f64,
    /// Fraction of the makespan each stage spent computing.
    pub busy_fraction: Vec<f64>,
    /// Time image `z` left the last stage.
    pub completion_times: Vec<f64>,
}

impl SimResult {
    /// `image,completion_s` rows.
    pub fn write_completion_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["image", "completion_s"])?;
        for (z, t) in self.completion_times.iter().enumerate() {
            w.write_record([(z + 1).to_string(), t.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `spec` to completion.
pub fn simulate(spec: &SimSpec) -> Result<SimResult, SimError> {
    spec.validate()?;
    let p = spec.stage_times.len();
    let z_count = spec.num_images as usize;
    let mut sampler = match spec.jitter {
        Some(j) if j.sigma > 0.0 => {
            let dist = LogNormal::new(-j.sigma * j.sigma / 2.0, j.sigma).map_err(|_| SimError::Sigma(j.sigma))?;
            Some((dist, ChaCha8Rng::seed_from_u64(j.seed)))
        }
        _ => None,
    };

    // departure time of the previous image from each stage
    let mut depart_prev = vec![0.0f64; p];
    let mut busy = vec![0.0f64; p];
    let mut completion = Vec::with_capacity(z_count);
    let mut start = vec![0.0f64; p];
    let mut finish = vec![0.0f64; p];

    for _ in 0..z_count {
        for i in 0..p {
            let arrival = if i == 0 {
                0.0
            } else {
                finish[i - 1] + spec.handoff_delay
            };
            start[i] = arrival.max(depart_prev[i]);
            let t = match sampler.as_mut() {
                Some((dist, rng)) => spec.stage_times[i] * dist.sample(rng),
                None => spec.stage_times[i],
            };
            busy[i] += t;
            finish[i] = start[i] + t;
        }
        // a stage releases an image once the next stage has taken it
        for i in 0..p {
            depart_prev[i] = if i + 1 < p {
                finish[i].max(start[i + 1])
            } else {
                finish[i]
            };
        }
        completion.push(finish[p - 1]);
    }

    let makespan = *completion.last().unwrap();
    Ok(SimResult {
        makespan,
        throughput: spec.num_images as f64 / makespan,
        busy_fraction: busy.iter().map(|b| b / makespan).collect(),
        completion_times: completion,
    })
}

/// `1 / max(stage_times)`.
pub fn steady_state_throughput(spec: &SimSpec) -> Result<f64, SimError> {
    spec.validate()?;
    if spec.jitter.is_some_and(|j| j.sigma > 0.0) {
        return Err(SimError::Jittered);
    }
    Ok(1.0 / spec.stage_times.iter().cloned().fold(0.0, f64::max))
}
