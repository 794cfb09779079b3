//! System parameters, task-size distributions, slowdown models, and the
//! closed-form per-symbol arithmetic shared by every other module.

mod quad;
mod rng;
mod sizes;
mod slowdown;

pub use rng::{RngHandle, streams};
pub use sizes::TaskSizeDistribution;
pub use slowdown::{exp_order_stat_mean, order_stat_mean, sample_slowdown, OrderStatTable, SlowdownModel};

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Snap values that are within one part in 10^9 of an integer before taking
/// ceilings; keeps partition sizes stable under float noise in `1/lambda`.
pub(crate) fn ceil_snapped(z: f64) -> f64 {
    let r = z.round();
    if (z - r).abs() < 1e-9 {
        r
    } else {
        z.ceil()
    }
}

/// Global system parameters.
///
/// `lambda` is the per-server-normalized arrival intensity: jobs arrive at
/// rate `lambda * n / k`. `mu` is the inverse mean slowdown. `alpha` in
/// (1/2, 1) controls how much spare capacity (`~n^alpha` servers) the
/// idle-server policies reserve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    n: u32,
    k: u32,
    lambda: f64,
    mu: f64,
    alpha: f64,
}

impl SystemParams {
    pub fn new(n: u32, k: u32, lambda: f64, mu: f64, alpha: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("n must be positive".into()));
        }
        if k == 0 || k > n {
            return Err(Error::InvalidParams(format!("k must be in 1..=n, got k={k}, n={n}")));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParams(format!("lambda must be positive, got {lambda}")));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParams(format!("mu must be positive, got {mu}")));
        }
        if !(alpha > 0.5 && alpha < 1.0) {
            return Err(Error::InvalidParams(format!("alpha must be in (1/2, 1), got {alpha}")));
        }
        let p = Self { n, k, lambda, mu, alpha };
        if !p.r_star().is_finite() {
            return Err(Error::InvalidParams("replication budget 1/lambda - 1/mu is not finite".into()));
        }
        Ok(p)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Job arrival rate `lambda * n / k`.
    pub fn job_arrival_rate(&self) -> f64 {
        self.lambda * self.n as f64 / self.k as f64
    }

    /// Replication budget per task, `1/lambda - 1/mu`.
    pub fn r_star(&self) -> f64 {
        1.0 / self.lambda - 1.0 / self.mu
    }

    /// Whether any admissible policy can stabilize the system:
    /// `lambda < 1 / (1 + 1/mu)`, equivalently `r_star > 1`.
    pub fn is_stabilizable(&self) -> bool {
        self.lambda < 1.0 / (1.0 + 1.0 / self.mu)
    }

    /// Batch size used by the replication policies: `ceil(r_star * k)`.
    pub fn batch_ceil(&self) -> Result<u32> {
        let z = ceil_snapped(self.r_star() * self.k as f64);
        if z < 1.0 || z > u32::MAX as f64 {
            return Err(Error::Domain(format!("replica batch size {z} out of range")));
        }
        Ok(z as u32)
    }

    /// Mixing probability that makes the mean replicas per job exactly
    /// `r_star * k` using batches of `ceil(r_star k)` and `ceil(r_star k) - 1`.
    ///
    /// Returns 1 when `r_star * k` is an integer.
    pub fn p_k(&self) -> Result<f64> {
        let rs = self.r_star();
        if rs <= 1.0 {
            return Err(Error::Domain(format!(
                "mixing probability needs replication budget > 1, got r*={rs}"
            )));
        }
        let z = rs * self.k as f64;
        Ok(z - ceil_snapped(z) + 1.0)
    }

    /// Finite-n routing probability to the larger-batch subsystem:
    /// `(p_k - 2 n^(alpha-1))^+`.
    pub fn q_n(&self) -> Result<f64> {
        let q = self.p_k()? - 2.0 * (self.n as f64).powf(self.alpha - 1.0);
        Ok(q.max(0.0))
    }
}

/// `r_star(params) = 1/lambda - 1/mu`, the replication budget per task.
pub fn r_star(params: &SystemParams) -> f64 {
    params.r_star()
}

/// True iff a stable admissible policy exists for these parameters.
pub fn is_stabilizable(params: &SystemParams) -> bool {
    params.is_stabilizable()
}

/// Two-point mixing probability; see [`SystemParams::p_k`].
pub fn p_k(params: &SystemParams) -> Result<f64> {
    params.p_k()
}
