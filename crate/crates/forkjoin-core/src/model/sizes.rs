use crate::{Error, Result};
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

/// Task-size distribution. Sizes are i.i.d. across jobs and, unless a
/// construction explicitly overrides it, have unit mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskSizeDistribution {
    Deterministic { value: f64 },
    Exponential { mean: f64 },
    /// Density `shape * scale^shape / x^(shape+1)` on `x >= scale`; finite
    /// mean requires `shape > 1`.
    Pareto { shape: f64, scale: f64 },
    /// Finite support with probability weights; weights must sum to 1.
    DiscreteGrid { points: Vec<(f64, f64)> },
}

impl TaskSizeDistribution {
    pub fn deterministic(value: f64) -> Result<Self> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::InvalidParams(format!("task size must be nonnegative, got {value}")));
        }
        Ok(Self::Deterministic { value })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidParams(format!("exponential mean must be positive, got {mean}")));
        }
        Ok(Self::Exponential { mean })
    }

    pub fn pareto(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 1.0) {
            return Err(Error::InvalidParams(format!("pareto shape must exceed 1 for a finite mean, got {shape}")));
        }
        if !(scale > 0.0) {
            return Err(Error::InvalidParams(format!("pareto scale must be positive, got {scale}")));
        }
        Ok(Self::Pareto { shape, scale })
    }

    /// Unit-mean pareto: `scale = (shape - 1) / shape`.
    pub fn unit_mean_pareto(shape: f64) -> Result<Self> {
        Self::pareto(shape, (shape - 1.0) / shape)
    }

    pub fn discrete(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParams("discrete grid must be nonempty".into()));
        }
        let mut total = 0.0;
        for &(x, w) in &points {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::InvalidParams(format!("support point {x} must be nonnegative")));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidParams(format!("weight {w} must be nonnegative")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("discrete weights sum to {total}, expected 1")));
        }
        Ok(Self::DiscreteGrid { points })
    }

    /// Validate the unit-mean contract to 1e-9.
    pub fn require_unit_mean(&self) -> Result<()> {
        let m = self.mean();
        if (m - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("task sizes must have unit mean, got {m}")));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Deterministic { value } => *value,
            Self::Exponential { mean } => *mean,
            Self::Pareto { shape, scale } => scale * shape / (shape - 1.0),
            Self::DiscreteGrid { points } => points.iter().map(|(x, w)| x * w).sum(),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Deterministic { value } => *value,
            Self::Exponential { mean } => rand_distr::Exp::new(1.0 / mean).unwrap().sample(rng),
            Self::Pareto { shape, scale } => rand_distr::Pareto::new(*scale, *shape).unwrap().sample(rng),
            Self::DiscreteGrid { points } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for &(x, w) in points {
                    acc += w;
                    if u < acc {
                        return x;
                    }
                }
                points.last().unwrap().0
            }
        }
    }

    /// Quantile at `q` in [0, 1); used to build optimization grids.
    pub fn quantile(&self, q: f64) -> f64 {
        match self {
            Self::Deterministic { value } => *value,
            Self::Exponential { mean } => -mean * (1.0 - q).ln(),
            Self::Pareto { shape, scale } => scale * (1.0 - q).powf(-1.0 / shape),
            Self::DiscreteGrid { points } => {
                let mut acc = 0.0;
                for &(x, w) in points {
                    acc += w;
                    if q < acc {
                        return x;
                    }
                }
                points.last().unwrap().0
            }
        }
    }

    /// Grid of `(x, weight)` pairs for the profile optimizer: the support
    /// itself for discrete distributions, otherwise `m` quantile midpoints
    /// with equal weights.
    pub fn optimization_grid(&self, m: usize) -> Vec<(f64, f64)> {
        match self {
            Self::Deterministic { value } => vec![(*value, 1.0)],
            Self::DiscreteGrid { points } => points.clone(),
            _ => {
                let m = m.max(1);
                (0..m)
                    .map(|j| (self.quantile((j as f64 + 0.5) / m as f64), 1.0 / m as f64))
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{streams, RngHandle};
    use approx::assert_relative_eq;

    #[test]
    fn unit_mean_constructions() {
        TaskSizeDistribution::deterministic(1.0).unwrap().require_unit_mean().unwrap();
        TaskSizeDistribution::exponential(1.0).unwrap().require_unit_mean().unwrap();
        TaskSizeDistribution::unit_mean_pareto(2.5).unwrap().require_unit_mean().unwrap();
        let g = TaskSizeDistribution::discrete(vec![(0.5, 0.5), (1.5, 0.5)]).unwrap();
        g.require_unit_mean().unwrap();
        assert!(TaskSizeDistribution::deterministic(2.0).unwrap().require_unit_mean().is_err());
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TaskSizeDistribution::discrete(vec![(0.5, 0.6), (1.5, 0.5)]).is_err());
        assert!(TaskSizeDistribution::discrete(vec![(-0.5, 1.0)]).is_err());
        assert!(TaskSizeDistribution::discrete(vec![]).is_err());
    }

    #[test]
    fn sample_means_match() {
        let mut rng = RngHandle::new(11, streams::TASK_SIZES).rng();
        for dist in [
            TaskSizeDistribution::exponential(1.0).unwrap(),
            TaskSizeDistribution::unit_mean_pareto(3.0).unwrap(),
            TaskSizeDistribution::discrete(vec![(0.5, 0.5), (1.5, 0.5)]).unwrap(),
        ] {
            let n = 200_000;
            let mean: f64 = (0..n).map(|_| dist.sample(&mut rng)).sum::<f64>() / n as f64;
            assert!((mean - 1.0).abs() < 0.02, "{dist:?}: {mean}");
        }
    }

    #[test]
    fn quantile_grid_covers_distribution() {
        let d = TaskSizeDistribution::exponential(1.0).unwrap();
        let grid = d.optimization_grid(64);
        assert_eq!(grid.len(), 64);
        let total: f64 = grid.iter().map(|(_, w)| w).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
        let mean: f64 = grid.iter().map(|(x, w)| x * w).sum();
        assert!((mean - 1.0).abs() < 0.02, "grid mean {mean}");
    }
}
