//! Monte Carlo estimation helpers.
//!
//! Replicas are mapped in parallel but reduced in replica order, so every
//! estimate is bit-identical regardless of thread count. Thread count is
//! controlled by the usual `RAYON_NUM_THREADS` environment variable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Mean and standard error of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replicas: usize,
}

impl McEstimate {
    /// |mean - target| measured in standard errors, with an absolute
    /// floor so exact quantities compare cleanly.
    pub fn sigmas_from(&self, target: f64) -> f64 {
        let denom = self.std_error.max(1e-15);
        (self.mean - target).abs() / denom
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        (self.mean - target).abs() <= sigmas * self.std_error + 1e-12
    }
}

/// Estimates `E[f(replica)]` over replicas `0..n`.
pub fn mc_mean(n: usize, f: impl Fn(u64) -> f64 + Sync) -> McEstimate {
    let samples: Vec<f64> = (0..n as u64).into_par_iter().map(&f).collect();
    summarize(&samples)
}

/// Mean and standard error of an explicit sample vector.
pub fn summarize(samples: &[f64]) -> McEstimate {
    let n = samples.len();
    assert!(n >= 2, "need at least two replicas");
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples
        .iter()
        .map(|x| {
            let d = x - mean;
            d * d
        })
        .sum::<f64>()
        / (n as f64 - 1.0);
    McEstimate {
        mean,
        std_error: (var / n as f64).sqrt(),
        replicas: n,
    }
}

/// Collects one value per replica, in replica order.
pub fn mc_samples(n: usize, f: impl Fn(u64) -> f64 + Sync) -> Vec<f64> {
    (0..n as u64).into_par_iter().map(&f).collect()
}
