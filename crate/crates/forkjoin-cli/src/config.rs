//! Experiment configuration: a sectioned key-value file (TOML) with every
//! cross-field constraint re-validated at load and unknown keys rejected.

use anyhow::{bail, Context};
use forkjoin_core::model::{SlowdownModel, SystemParams, TaskSizeDistribution};
use forkjoin_core::optimizer::{ReplicationProfile, SolveOptions};
use forkjoin_core::policies::{
    build_baseline, build_dq, build_frec, build_sb_dq, build_sb_frec, PolicyInstance,
};
use forkjoin_core::model::OrderStatTable;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub task_size: TaskSizeSection,
    #[serde(default)]
    pub slowdown: SlowdownSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n: u32,
    pub k: u32,
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSizeSection {
    /// deterministic | exponential | pareto | discrete
    pub dist: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<(f64, f64)>>,
}

impl Default for TaskSizeSection {
    fn default() -> Self {
        Self {
            dist: "deterministic".into(),
            value: Some(1.0),
            mean: None,
            shape: None,
            scale: None,
            points: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowdownSection {
    /// exponential | gamma
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default = "default_shape_coeff")]
    pub shape_coeff: f64,
    #[serde(default = "default_shape_floor")]
    pub shape_floor: f64,
}

fn default_shape_coeff() -> f64 {
    1.0
}

fn default_shape_floor() -> f64 {
    1e-3
}

impl Default for SlowdownSection {
    fn default() -> Self {
        Self { model: "exponential".into(), mu: None, shape_coeff: 1.0, shape_floor: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    /// baseline | frec | frec-literal | dq | sb-frec | sb-dq
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile_path: Option<String>,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self { name: "baseline".into(), r_max: None, profile_path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default = "default_replications")]
    pub replications: u32,
}

fn default_batches() -> usize {
    32
}

fn default_replications() -> u32 {
    1
}

impl Default for SimSection {
    fn default() -> Self {
        Self { horizon: 1000.0, warmup: 100.0, seed: 1, batches: 32, replications: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    /// Explicit `[x, weight]` grid; omitted means a quantile grid of the
    /// task-size distribution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// When set, the capacity target is `1 - n^(slack_exponent - 1)`;
    /// otherwise 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slack_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_bracket: Option<(f64, f64)>,
}

fn default_grid_points() -> usize {
    64
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self { grid: None, grid_points: 64, slack_exponent: None, r_max: None, y_bracket: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), formats: vec!["csv".into(), "json".into()] }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.params().context("[system]")?;
        self.task_sizes().context("[task_size]")?;
        self.slowdowns().context("[slowdown]")?;
        match self.policy.name.as_str() {
            "baseline" | "frec" | "frec-literal" | "dq" | "sb-frec" | "sb-dq" => {}
            other => bail!("[policy] unknown policy name {other:?}"),
        }
        if self.policy.name.starts_with("sb-") && self.policy.profile_path.is_none() {
            bail!("[policy] {} requires profile_path", self.policy.name);
        }
        if !(self.sim.horizon > self.sim.warmup && self.sim.warmup >= 0.0) {
            bail!("[sim] need horizon > warmup >= 0");
        }
        if self.sim.replications == 0 {
            bail!("[sim] replications must be at least 1");
        }
        if let Some(grid) = &self.optimize.grid {
            let total: f64 = grid.iter().map(|(_, w)| w).sum();
            if (total - 1.0).abs() > 1e-9 {
                bail!("[optimize] grid weights sum to {total}, expected 1");
            }
            if grid.iter().any(|&(x, w)| x < 0.0 || w < 0.0) {
                bail!("[optimize] grid entries must be nonnegative");
            }
        }
        for f in &self.output.formats {
            if f != "csv" && f != "json" {
                bail!("[output] unknown format {f:?}");
            }
        }
        Ok(())
    }

    pub fn params(&self) -> anyhow::Result<SystemParams> {
        let s = &self.system;
        Ok(SystemParams::new(s.n, s.k, s.lambda, s.mu, s.alpha)?)
    }

    pub fn task_sizes(&self) -> anyhow::Result<TaskSizeDistribution> {
        let t = &self.task_size;
        let dist = match t.dist.as_str() {
            "deterministic" => TaskSizeDistribution::deterministic(t.value.unwrap_or(1.0))?,
            "exponential" => TaskSizeDistribution::exponential(t.mean.unwrap_or(1.0))?,
            "pareto" => {
                let shape = t.shape.context("pareto needs shape")?;
                match t.scale {
                    Some(scale) => TaskSizeDistribution::pareto(shape, scale)?,
                    None => TaskSizeDistribution::unit_mean_pareto(shape)?,
                }
            }
            "discrete" => {
                let points = t.points.clone().context("discrete needs points")?;
                TaskSizeDistribution::discrete(points)?
            }
            other => bail!("unknown task-size distribution {other:?}"),
        };
        Ok(dist)
    }

    pub fn slowdowns(&self) -> anyhow::Result<SlowdownModel> {
        let s = &self.slowdown;
        let mu = s.mu.unwrap_or(self.system.mu);
        if (mu - self.system.mu).abs() > 1e-12 {
            bail!("slowdown mu {} disagrees with system mu {}", mu, self.system.mu);
        }
        let model = match s.model.as_str() {
            "exponential" => SlowdownModel::exponential(mu)?,
            "gamma" => SlowdownModel::gamma(mu, s.shape_coeff, s.shape_floor)?,
            other => bail!("unknown slowdown model {other:?}"),
        };
        Ok(model)
    }

    /// Build the configured policy; size-based policies load their profile
    /// relative to `base_dir`.
    pub fn policy(&self, base_dir: &Path) -> anyhow::Result<PolicyInstance> {
        let params = self.params()?;
        let policy = match self.policy.name.as_str() {
            "baseline" => build_baseline(&params),
            "frec" => build_frec(&params)?,
            "frec-literal" => forkjoin_core::policies::build_frec_literal(&params)?,
            "dq" => build_dq(&params)?,
            name @ ("sb-frec" | "sb-dq") => {
                let rel = self.policy.profile_path.as_ref().context("profile_path required")?;
                let path = base_dir.join(rel);
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading profile {}", path.display()))?;
                let profile = ReplicationProfile::from_csv(&text)?;
                let table = OrderStatTable::new(self.slowdowns()?);
                if name == "sb-frec" {
                    build_sb_frec(&params, &profile, &table)?
                } else {
                    build_sb_dq(&params, &profile, &table)?
                }
            }
            other => bail!("unknown policy {other:?}"),
        };
        Ok(policy)
    }

    /// Grid for the optimizer: explicit entries when given, otherwise the
    /// task distribution's quantile grid.
    pub fn optimization_grid(&self) -> anyhow::Result<Vec<(f64, f64)>> {
        if let Some(grid) = &self.optimize.grid {
            return Ok(grid.clone());
        }
        Ok(self.task_sizes()?.optimization_grid(self.optimize.grid_points))
    }

    pub fn solve_options(&self) -> SolveOptions {
        let mut opts = SolveOptions::new(self.system.k);
        if let Some(se) = self.optimize.slack_exponent {
            opts.slack_target = 1.0 - (self.system.n as f64).powf(se - 1.0);
        }
        if let Some(r) = self.optimize.r_max {
            opts.r_max = r;
        }
        if let Some(b) = self.optimize.y_bracket {
            opts.y_bracket = b;
        }
        opts
    }
}
