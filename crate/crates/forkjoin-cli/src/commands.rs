//! Subcommand implementations.

use crate::config::ExperimentConfig;
use crate::output::{provenance_line, write_jobs_csv, write_json};
use anyhow::Context;
use forkjoin_core::analytics::{self, BoundReport, StatsBundle};
use forkjoin_core::engine::{run_simulation, SimConfig, SimulationResult};
use forkjoin_core::model::{
    order_stat_mean, OrderStatTable, SlowdownModel, SystemParams, TaskSizeDistribution,
};
use forkjoin_core::optimizer::{convexity_report_from_values, solve};
use forkjoin_core::policies::{build_baseline, PolicyInstance, PolicyRunStats};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Exit status for a run that tripped the instability abort.
pub const EXIT_UNSTABLE: u8 = 2;

#[derive(Debug, Serialize)]
struct RepSummary {
    replication: u32,
    seed: u64,
    arrived: u64,
    departed: u64,
    censored: u64,
    event_count: u64,
    time_avg_busy_servers: f64,
    wall_seconds: f64,
    aborted: Option<String>,
    stats: Option<StatsBundle>,
    policy: PolicyRunStats,
}

#[derive(Debug, Serialize)]
struct SimulateSummary<'a> {
    config: &'a ExperimentConfig,
    policy: &'a str,
    bound_report: Option<BoundReport>,
    replications: Vec<RepSummary>,
}

fn run_one(
    config: &ExperimentConfig,
    params: &SystemParams,
    sizes: &TaskSizeDistribution,
    slowdowns: &SlowdownModel,
    policy: &PolicyInstance,
    seed: u64,
) -> anyhow::Result<SimulationResult> {
    let mut cfg = SimConfig::new(config.sim.horizon, config.sim.warmup, seed);
    cfg.live_sample_points = 512;
    Ok(run_simulation(params, sizes, slowdowns, policy, &cfg)?)
}

fn rep_summary(config: &ExperimentConfig, rep: u32, seed: u64, res: &SimulationResult) -> RepSummary {
    RepSummary {
        replication: rep,
        seed,
        arrived: res.arrived,
        departed: res.departed,
        censored: res.censored,
        event_count: res.event_count,
        time_avg_busy_servers: res.time_avg_busy_servers,
        wall_seconds: res.wall_seconds,
        aborted: res.aborted.clone(),
        stats: analytics::summarize(res, config.sim.batches).ok(),
        policy: res.policy_stats.clone(),
    }
}

pub fn cmd_simulate(config: &ExperimentConfig, base_dir: &Path, out_dir: &Path) -> anyhow::Result<u8> {
    let params = config.params()?;
    let sizes = config.task_sizes()?;
    let slowdowns = config.slowdowns()?;
    let policy = config.policy(base_dir)?;
    std::fs::create_dir_all(out_dir)?;

    let reps: Vec<(u32, u64)> =
        (0..config.sim.replications).map(|r| (r, config.sim.seed + r as u64)).collect();
    let results: Vec<(u32, u64, anyhow::Result<SimulationResult>)> = reps
        .par_iter()
        .map(|&(rep, seed)| (rep, seed, run_one(config, &params, &sizes, &slowdowns, &policy, seed)))
        .collect();

    let mut summaries = Vec::new();
    let mut unstable = false;
    let csv = config.output.formats.iter().any(|f| f == "csv");
    for (rep, seed, result) in results {
        let res = result?;
        if csv {
            let name = if config.sim.replications == 1 {
                "jobs.csv".to_string()
            } else {
                format!("jobs_rep{rep:03}.csv")
            };
            write_jobs_csv(&out_dir.join(name), config, seed, &res)?;
        }
        if res.aborted.is_some() {
            unstable = true;
            eprintln!("replication {rep}: {}", res.aborted.as_deref().unwrap());
        }
        summaries.push(rep_summary(config, rep, seed, &res));
    }

    if config.output.formats.iter().any(|f| f == "json") {
        let summary = SimulateSummary {
            config,
            policy: policy.name(),
            bound_report: BoundReport::compute(&params).ok(),
            replications: summaries,
        };
        write_json(&out_dir.join("summary.json"), &summary)?;
    }
    Ok(if unstable { EXIT_UNSTABLE } else { 0 })
}

pub fn cmd_bound(config: &ExperimentConfig) -> anyhow::Result<u8> {
    let params = config.params()?;
    match BoundReport::compute(&params) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        Err(e) => {
            let err = serde_json::json!({
                "error": e.to_string(),
                "lambda": params.lambda(),
                "stability_threshold": 1.0 / (1.0 + 1.0 / params.mu()),
            });
            println!("{}", serde_json::to_string_pretty(&err)?);
            Ok(1)
        }
    }
}

pub fn cmd_optimize(config: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<u8> {
    let params = config.params()?;
    let slowdowns = config.slowdowns()?;
    let table = OrderStatTable::new(slowdowns);
    let grid = config.optimization_grid()?;
    let opts = config.solve_options();
    let sol = solve(params.lambda(), params.k(), &table, &grid, &opts)
        .context("[optimize] solving the replication profile")?;
    for w in &sol.warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("profile.csv");
    // second comment line carries run provenance; parsers take only the
    // first as the profile header
    let mut csv = sol.profile.to_csv();
    if let Some(pos) = csv.find('\n') {
        csv.insert_str(pos + 1, &format!("{}\n", provenance_line(config, config.sim.seed)));
    }
    std::fs::write(&csv_path, csv)?;
    write_json(
        &out_dir.join("profile.json"),
        &serde_json::json!({
            "config": config,
            "profile": sol.profile,
            "dual_value": sol.dual_value,
            "duality_gap": sol.duality_gap,
            "warnings": sol.warnings,
        }),
    )?;
    println!(
        "objective {:.9}, capacity {:.9} (target {}), dual multiplier {:.9}",
        sol.profile.objective_value, sol.profile.capacity_usage, sol.profile.slack_target, sol.profile.dual_y
    );
    println!("profile written to {}", csv_path.display());
    Ok(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    N,
    Lambda,
}

impl std::str::FromStr for SweepParam {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "n" => Ok(Self::N),
            "lambda" => Ok(Self::Lambda),
            other => anyhow::bail!("unknown sweep parameter {other:?} (expected n or lambda)"),
        }
    }
}

pub fn cmd_sweep(
    config: &ExperimentConfig,
    base_dir: &Path,
    out_dir: &Path,
    param: SweepParam,
    values: &[f64],
) -> anyhow::Result<u8> {
    if values.is_empty() {
        anyhow::bail!("sweep values list is empty");
    }
    std::fs::create_dir_all(out_dir)?;
    let points: Vec<(usize, u32, f64)> = values
        .iter()
        .enumerate()
        .flat_map(|(i, &v)| (0..config.sim.replications).map(move |rep| (i, rep, v)))
        .collect();

    let rows: Vec<String> = points
        .par_iter()
        .map(|&(i, rep, value)| {
            let mut cfg = config.clone();
            match param {
                SweepParam::N => cfg.system.n = value as u32,
                SweepParam::Lambda => cfg.system.lambda = value,
            }
            let seed = cfg.sim.seed + (i as u64) * 1000 + rep as u64;
            cfg.sim.seed = seed;
            let label = match param {
                SweepParam::N => "n",
                SweepParam::Lambda => "lambda",
            };
            let run = || -> anyhow::Result<String> {
                cfg.validate()?;
                let params = cfg.params()?;
                let sizes = cfg.task_sizes()?;
                let slowdowns = cfg.slowdowns()?;
                let policy = cfg.policy(base_dir)?;
                let res = run_one(&cfg, &params, &sizes, &slowdowns, &policy, seed)?;
                if let Some(msg) = &res.aborted {
                    anyhow::bail!("{msg}");
                }
                let s = analytics::summarize(&res, cfg.sim.batches)?;
                let report = BoundReport::compute(&params).ok();
                let (pred, asym, lower) = report
                    .map(|r| (r.finite_n_prediction, r.policy_asymptote, r.lower_bound_delay))
                    .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
                Ok(format!(
                    "{label},{value},{rep},{seed},{},{},{},{},{},{},{},{},{},",
                    s.jobs,
                    s.delay.mean,
                    s.service_time.mean,
                    s.queueing_delay.mean,
                    s.prob_positive_wait.mean,
                    s.prob_positive_wait.ci_halfwidth,
                    pred,
                    asym,
                    lower,
                ))
            };
            match run() {
                Ok(row) => row,
                Err(e) => format!(
                    "{label},{value},{rep},{seed},,,,,,,,,,\"{}\"",
                    e.to_string().replace('"', "'")
                ),
            }
        })
        .collect();

    let path = out_dir.join("sweep.csv");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(out, "{}", provenance_line(config, config.sim.seed))?;
    writeln!(
        out,
        "param,value,replication,seed,jobs,mean_delay,mean_service,mean_queueing,p_wait,p_wait_ci,finite_n_prediction,policy_asymptote,lower_bound,error"
    )?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    println!("sweep written to {}", path.display());
    Ok(0)
}

fn parse_convexity_table(path: &Path) -> anyhow::Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut xs = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let x: f64 = fields.next().context("empty row")?.parse()?;
        let row: Result<Vec<f64>, _> = fields.map(str::parse).collect();
        xs.push(x);
        rows.push(row?);
    }
    anyhow::ensure!(!xs.is_empty(), "convexity table is empty");
    Ok((xs, rows))
}

pub fn cmd_validate(config: &ExperimentConfig, convexity_table: Option<&Path>) -> anyhow::Result<u8> {
    let mut failures = 0u32;
    let mut report = |name: &str, ok: bool, detail: String| {
        if ok {
            println!("ok:   {name}{}", if detail.is_empty() { String::new() } else { format!(" ({detail})") });
        } else {
            println!("FAIL: {name} ({detail})");
            failures += 1;
        }
    };

    let params = config.params()?;
    let slowdowns = config.slowdowns()?;

    // order-statistic identities: averaging recovers the mean, analytic
    // matches Monte Carlo at 4 sigma
    {
        let mu = slowdowns.mu();
        let mut worst: f64 = 0.0;
        for r in 1u32..=6 {
            for x in [0.25, 1.0, 4.0] {
                let avg: f64 = (1..=r)
                    .map(|i| order_stat_mean(&slowdowns, i, r, x).unwrap())
                    .sum::<f64>()
                    / r as f64;
                worst = worst.max((avg - 1.0 / mu).abs());
            }
        }
        report("order statistics average to the mean slowdown", worst < 1e-6, format!("worst {worst:.2e}"));

        let draws = 100_000;
        let mut rng = forkjoin_core::model::RngHandle::new(config.sim.seed, 999).rng();
        let mut sum = 0.0;
        for _ in 0..draws {
            let a = forkjoin_core::model::sample_slowdown(&slowdowns, 1.0, &mut rng);
            let b = forkjoin_core::model::sample_slowdown(&slowdowns, 1.0, &mut rng);
            sum += a.min(b);
        }
        let mc = sum / draws as f64;
        let analytic = order_stat_mean(&slowdowns, 1, 2, 1.0)?;
        let se = (1.0 / mu) / (draws as f64).sqrt();
        report(
            "pair-minimum mean matches Monte Carlo",
            (mc - analytic).abs() < 4.0 * se,
            format!("mc {mc:.4} vs analytic {analytic:.4}"),
        );
    }

    // replication-convexity check (model-based, or a user-supplied table)
    {
        let (holds, detail) = match convexity_table {
            Some(path) => {
                let (xs, rows) = parse_convexity_table(path)?;
                let rep = convexity_report_from_values(&xs, &rows);
                (rep.holds(), format!("{} violations, worst {:.2e}", rep.violations.len(), rep.min_second_difference))
            }
            None => {
                let table = OrderStatTable::new(slowdowns);
                let xs = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
                let rep = forkjoin_core::optimizer::check_assumption_convexity(&table, &xs, 20)?;
                (rep.holds(), format!("{} violations, worst {:.2e}", rep.violations.len(), rep.min_second_difference))
            }
        };
        report("replica-weighted minimum is convex in r", holds, detail);
    }

    // Little's law on a short stable run
    {
        let p = SystemParams::new(20, params.k().min(2), 0.4, params.mu(), params.alpha())?;
        let sizes = TaskSizeDistribution::deterministic(1.0)?;
        let policy = build_baseline(&p);
        let cfg = SimConfig::new(6000.0, 300.0, config.sim.seed);
        let res = run_simulation(&p, &sizes, &slowdowns, &policy, &cfg)?;
        let resid = res.little_law_residual();
        report("Little's law on a short run", resid < 0.02, format!("residual {resid:.4}"));
    }

    // duality gap on a small instance
    {
        let table = OrderStatTable::new(SlowdownModel::exponential(params.mu())?);
        let threshold = 1.0 / (1.0 + 1.0 / params.mu());
        let lambda = params.lambda().min(0.9 * threshold);
        let sol = solve(
            lambda,
            1,
            &table,
            &[(1.0, 1.0)],
            &forkjoin_core::optimizer::SolveOptions::new(1),
        )?;
        report("strong duality on a small instance", sol.duality_gap <= 1e-6, format!("gap {:.2e}", sol.duality_gap));
    }

    // seed replay determinism
    {
        let p = SystemParams::new(16, 1, 0.4, params.mu(), params.alpha())?;
        let sizes = TaskSizeDistribution::deterministic(1.0)?;
        let policy = build_baseline(&p);
        let cfg = SimConfig::new(500.0, 50.0, config.sim.seed);
        let hash = |res: &SimulationResult| -> u64 {
            let mut h = 0xcbf29ce484222325u64;
            for j in &res.jobs {
                for bits in [j.delay.to_bits(), j.service_time.to_bits()] {
                    h ^= bits;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
            h
        };
        let a = hash(&run_simulation(&p, &sizes, &slowdowns, &policy, &cfg)?);
        let b = hash(&run_simulation(&p, &sizes, &slowdowns, &policy, &cfg)?);
        report("seed replay is bit-identical", a == b, format!("{a:016x}"));
    }

    Ok(if failures == 0 { 0 } else { 1 })
}
