use super::quad;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;
use std::collections::HashMap;
use std::sync::Mutex;

/// Truncate the order-statistic survival integral where less than this much
/// mass remains.
const TAIL_MASS: f64 = 1e-12;
/// Absolute quadrature tolerance for order-statistic means.
const QUAD_TOL: f64 = 1e-8;

/// Conditional slowdown law given the task size `x`.
///
/// Both variants have conditional mean exactly `1/mu` for every `x`. Under
/// `SizeBasedGamma` the slowdown is Gamma with shape
/// `kappa(x) = max(shape_coeff * x, shape_floor)` and rate `kappa(x) * mu`,
/// so larger tasks see less variable slowdowns (variance `1/(kappa mu^2)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SlowdownModel {
    IndependentExponential { mu: f64 },
    SizeBasedGamma { mu: f64, shape_coeff: f64, shape_floor: f64 },
}

impl SlowdownModel {
    pub fn exponential(mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParams(format!("mu must be positive, got {mu}")));
        }
        Ok(Self::IndependentExponential { mu })
    }

    pub fn gamma(mu: f64, shape_coeff: f64, shape_floor: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParams(format!("mu must be positive, got {mu}")));
        }
        if !(shape_coeff > 0.0) {
            return Err(Error::InvalidParams(format!("shape_coeff must be positive, got {shape_coeff}")));
        }
        if !(shape_floor > 0.0) {
            return Err(Error::InvalidParams(format!("shape_floor must be positive, got {shape_floor}")));
        }
        Ok(Self::SizeBasedGamma { mu, shape_coeff, shape_floor })
    }

    pub fn mu(&self) -> f64 {
        match self {
            Self::IndependentExponential { mu } => *mu,
            Self::SizeBasedGamma { mu, .. } => *mu,
        }
    }

    /// Gamma shape parameter at task size `x`.
    pub fn shape_at(&self, x: f64) -> Option<f64> {
        match self {
            Self::IndependentExponential { .. } => None,
            Self::SizeBasedGamma { shape_coeff, shape_floor, .. } => {
                Some((shape_coeff * x).max(*shape_floor))
            }
        }
    }

    /// Conditional CDF of a single slowdown given `X = x`.
    pub fn cdf(&self, x: f64, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            Self::IndependentExponential { mu } => 1.0 - (-mu * s).exp(),
            Self::SizeBasedGamma { mu, .. } => {
                let kappa = self.shape_at(x).unwrap();
                gamma_lr(kappa, kappa * mu * s)
            }
        }
    }
}

/// Mean of the `i`-th order statistic of `r` i.i.d. exponentials with rate
/// `mu`: `(1/mu) * sum_{j=0}^{i-1} 1/(r-j)`.
pub fn exp_order_stat_mean(i: u32, r: u32, mu: f64) -> Result<f64> {
    if i < 1 || i > r {
        return Err(Error::Domain(format!("order statistic index i={i} outside 1..={r}")));
    }
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("mu must be positive, got {mu}")));
    }
    let sum: f64 = (0..i).map(|j| 1.0 / (r - j) as f64).sum();
    Ok(sum / mu)
}

/// Conditional mean of the `i`-th order statistic of `r` slowdowns given
/// `X = x`.
///
/// Exponential slowdowns ignore `x` and use the harmonic closed form; the
/// size-based Gamma model integrates the order-statistic survival function
/// numerically.
pub fn order_stat_mean(model: &SlowdownModel, i: u32, r: u32, x: f64) -> Result<f64> {
    if i < 1 || i > r {
        return Err(Error::Domain(format!("order statistic index i={i} outside 1..={r}")));
    }
    match model {
        SlowdownModel::IndependentExponential { mu } => exp_order_stat_mean(i, r, *mu),
        SlowdownModel::SizeBasedGamma { .. } => {
            if !(x >= 0.0) {
                return Err(Error::Domain(format!("task size must be nonnegative, got {x}")));
            }
            let surv = |s: f64| order_stat_survival(model, x, s, i, r);
            // Find an upper limit where essentially no mass remains.
            let mut hi = 2.0 / model.mu();
            let mut doublings = 0;
            while surv(hi) >= TAIL_MASS {
                hi *= 2.0;
                doublings += 1;
                if doublings > 80 {
                    return Err(Error::Numerical {
                        what: format!("order statistic ({i},{r}) survival tail does not decay"),
                        achieved: surv(hi),
                    });
                }
            }
            quad::integrate(&surv, 0.0, hi, QUAD_TOL)
        }
    }
}

/// Survival function `P(S_[i:r] > s | X = x)`: the probability that fewer
/// than `i` of `r` draws fall at or below `s`.
fn order_stat_survival(model: &SlowdownModel, x: f64, s: f64, i: u32, r: u32) -> f64 {
    let f = model.cdf(x, s);
    if f >= 1.0 {
        return 0.0;
    }
    // Binomial(r, f) mass at 0..i-1 via the stable pmf recursion.
    let ratio = f / (1.0 - f);
    let mut pmf = (1.0 - f).powi(r as i32);
    let mut acc = pmf;
    for j in 0..i.saturating_sub(1) {
        pmf *= ratio * (r - j) as f64 / (j + 1) as f64;
        acc += pmf;
    }
    acc.min(1.0)
}

/// One draw from the conditional slowdown law given `X = x`.
pub fn sample_slowdown<R: Rng>(model: &SlowdownModel, x: f64, rng: &mut R) -> f64 {
    match model {
        SlowdownModel::IndependentExponential { mu } => {
            rand_distr::Exp::new(*mu).unwrap().sample(rng)
        }
        SlowdownModel::SizeBasedGamma { mu, .. } => {
            let kappa = model.shape_at(x).unwrap();
            rand_distr::Gamma::new(kappa, 1.0 / (kappa * mu)).unwrap().sample(rng)
        }
    }
}

/// Memoizing wrapper around [`order_stat_mean`]; the profile optimizer
/// evaluates the same `(i, r, x)` triples thousands of times.
pub struct OrderStatTable {
    model: SlowdownModel,
    cache: Mutex<HashMap<(u32, u32, u64), f64>>,
}

impl OrderStatTable {
    pub fn new(model: SlowdownModel) -> Self {
        Self { model, cache: Mutex::new(HashMap::new()) }
    }

    pub fn model(&self) -> &SlowdownModel {
        &self.model
    }

    pub fn mean(&self, i: u32, r: u32, x: f64) -> Result<f64> {
        let key = (i, r, x.to_bits());
        if let Some(&v) = self.cache.lock().unwrap().get(&key) {
            return Ok(v);
        }
        let v = order_stat_mean(&self.model, i, r, x)?;
        self.cache.lock().unwrap().insert(key, v);
        Ok(v)
    }
}
