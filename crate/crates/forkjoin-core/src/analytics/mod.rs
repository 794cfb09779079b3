//! Closed-form delay bounds, asymptotic service times, and statistical
//! post-processing of simulation output.

mod stats;

pub use stats::{batch_means, BatchMeansEstimate, StatsBundle};

use crate::engine::SimulationResult;
use crate::model::SystemParams;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Batch-means point estimates and 95% CIs for the delay decomposition of a
/// run, plus the accounting cross-checks.
///
/// Requires at least two jobs per batch; the per-job accounting identity
/// `mean(W) = mean(W^s) + mean(W^q)` holds exactly because each job's
/// queueing delay is defined as `W - W^s`.
pub fn summarize(run: &SimulationResult, batches: usize) -> Result<StatsBundle> {
    let delays: Vec<f64> = run.jobs.iter().map(|j| j.delay).collect();
    let service: Vec<f64> = run.jobs.iter().map(|j| j.service_time).collect();
    let queueing: Vec<f64> = run.jobs.iter().map(|j| j.queueing_delay).collect();
    let waited: Vec<f64> = run
        .jobs
        .iter()
        .map(|j| if j.queueing_delay > 0.0 { 1.0 } else { 0.0 })
        .collect();
    Ok(StatsBundle {
        jobs: run.jobs.len(),
        delay: batch_means(&delays, batches)?,
        service_time: batch_means(&service, batches)?,
        queueing_delay: batch_means(&queueing, batches)?,
        prob_positive_wait: batch_means(&waited, batches)?,
        mean_replicas_started: run.mean_replicas_started(),
        little_residual: run.little_law_residual(),
    })
}

fn require_stabilizable(params: &SystemParams) -> Result<f64> {
    let rs = params.r_star();
    if !params.is_stabilizable() {
        return Err(Error::Domain(format!(
            "no stable policy exists: lambda={} >= threshold 1/(1+1/mu)={}",
            params.lambda(),
            1.0 / (1.0 + 1.0 / params.mu())
        )));
    }
    Ok(rs)
}

/// Universal lower bound on the expected delay of any stable policy:
/// `1 + (1/mu) * sum_{i=1}^{k} 1/(k r* - i + 1)`.
pub fn delay_lower_bound(params: &SystemParams) -> Result<f64> {
    let rs = require_stabilizable(params)?;
    let k = params.k() as f64;
    let mu = params.mu();
    let sum: f64 = (1..=params.k()).map(|i| 1.0 / (k * rs - i as f64 + 1.0)).sum();
    Ok(1.0 + sum / mu)
}

/// Large-k limit of the delay lower bound: `1 + (1/mu) ln(r*/(r*-1))`.
pub fn delay_lower_bound_asymptotic(params: &SystemParams) -> Result<f64> {
    let rs = require_stabilizable(params)?;
    Ok(1.0 + (rs / (rs - 1.0)).ln() / params.mu())
}

fn frec_mixture(params: &SystemParams, weight_hi: f64) -> Result<f64> {
    let rs = require_stabilizable(params)?;
    if params.k() != 1 {
        return Err(Error::Domain(format!(
            "batch replication service-time formula applies to k=1, got k={}",
            params.k()
        )));
    }
    let big = params.batch_ceil()? as f64;
    if big < 2.0 {
        return Err(Error::Domain(format!("need ceil(r*) >= 2, got {big} (r*={rs})")));
    }
    let mu = params.mu();
    Ok(1.0 + weight_hi / (mu * big) + (1.0 - weight_hi) / (mu * (big - 1.0)))
}

/// Limiting expected service time under full replication with early
/// cancellation (k = 1): `1 + p_1/(mu ceil(r*)) + (1-p_1)/(mu (ceil(r*)-1))`.
pub fn frec_asymptotic_service(params: &SystemParams) -> Result<f64> {
    let p1 = params.p_k()?;
    frec_mixture(params, p1)
}

/// Finite-n variant of [`frec_asymptotic_service`] with the routing
/// probability `q_n` in place of `p_1`.
pub fn frec_finite_n_service(params: &SystemParams) -> Result<f64> {
    let q = params.q_n()?;
    frec_mixture(params, q)
}

fn dq_mixture(params: &SystemParams, weight_hi: f64) -> Result<f64> {
    require_stabilizable(params)?;
    let k = params.k();
    let big = params.batch_ceil()?;
    if big < k + 1 {
        return Err(Error::Domain(format!(
            "smaller subsystem would start fewer than k replicas: ceil(r*k)={big}, k={k}"
        )));
    }
    let mu = params.mu();
    let sum: f64 = (1..=k)
        .map(|i| {
            weight_hi / (big - i + 1) as f64 + (1.0 - weight_hi) / (big - i) as f64
        })
        .sum();
    Ok(1.0 + sum / mu)
}

/// Limiting expected service time under the two-pool idle-server policy at
/// fixed k.
pub fn dq_asymptotic_service(params: &SystemParams) -> Result<f64> {
    let pk = params.p_k()?;
    dq_mixture(params, pk)
}

/// Finite-n variant of [`dq_asymptotic_service`] with `q_n` in place of
/// `p_k`.
pub fn dq_finite_n_service(params: &SystemParams) -> Result<f64> {
    let q = params.q_n()?;
    dq_mixture(params, q)
}

/// Large-k limiting service time of the two-pool policy; coincides with the
/// asymptotic delay lower bound.
pub fn dq_asymptotic_service_large_k(params: &SystemParams) -> Result<f64> {
    delay_lower_bound_asymptotic(params)
}

/// Bound evaluation bundle for one parameter point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    /// Delay lower bound at this k.
    pub lower_bound_delay: f64,
    /// Large-k limit of the lower bound.
    pub asymptotic_limit: f64,
    /// Limiting service time of the matching replication policy at this k.
    pub policy_asymptote: f64,
    /// Same mixture evaluated with the finite-n routing probability `q_n`.
    pub finite_n_prediction: f64,
    /// `policy_asymptote - lower_bound_delay`.
    pub gap: f64,
}

impl BoundReport {
    pub fn compute(params: &SystemParams) -> Result<Self> {
        let lower = delay_lower_bound(params)?;
        let asym = delay_lower_bound_asymptotic(params)?;
        let policy = dq_asymptotic_service(params)?;
        let finite = dq_finite_n_service(params)?;
        Ok(Self {
            lower_bound_delay: lower,
            asymptotic_limit: asym,
            policy_asymptote: policy,
            finite_n_prediction: finite,
            gap: policy - lower,
        })
    }
}
