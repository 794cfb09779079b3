//! Batch-means estimation for steady-state simulation output.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Point estimate with a 95% confidence interval from non-overlapping batch
/// means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchMeansEstimate {
    pub mean: f64,
    pub ci_halfwidth: f64,
    pub batches: usize,
}

impl BatchMeansEstimate {
    pub fn lo(&self) -> f64 {
        self.mean - self.ci_halfwidth
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.ci_halfwidth
    }

    pub fn covers(&self, value: f64) -> bool {
        value >= self.lo() && value <= self.hi()
    }
}

/// Batch-means 95% CI over `values` (kept in arrival order) using `batches`
/// non-overlapping contiguous batches. Requires at least two values per
/// batch; a trailing remainder is dropped.
pub fn batch_means(values: &[f64], batches: usize) -> Result<BatchMeansEstimate> {
    let batches = batches.max(2);
    let per = values.len() / batches;
    if per < 2 {
        return Err(Error::InsufficientData { jobs: values.len(), needed: 2 * batches });
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| values[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (batches - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (batches - 1) as f64)
        .expect("valid t distribution")
        .inverse_cdf(0.975);
    Ok(BatchMeansEstimate {
        mean,
        ci_halfwidth: t * (var / batches as f64).sqrt(),
        batches,
    })
}

/// Statistics bundle produced by [`crate::analytics::summarize`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsBundle {
    pub jobs: usize,
    pub delay: BatchMeansEstimate,
    pub service_time: BatchMeansEstimate,
    pub queueing_delay: BatchMeansEstimate,
    pub prob_positive_wait: BatchMeansEstimate,
    pub mean_replicas_started: f64,
    /// `|L - lambda_eff * E[W]| / L` with `L` the time-average live-job count.
    pub little_residual: f64,
}
