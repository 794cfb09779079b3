//! Command-line front end: experiment configs, single runs, bound
//! evaluation, profile optimization, parameter sweeps, and a fast invariant
//! suite.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use commands::SweepParam;
use config::ExperimentConfig;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "forkjoin", version, about = "Fork-join replication system simulator and optimizer")]
struct Cli {
    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replications and sweep points.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (overrides the config's [output] dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output formats: csv, json (overrides the config).
    #[arg(long, global = true, value_delimiter = ',')]
    format: Option<Vec<String>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured policy and write per-job and summary outputs.
    Simulate,
    /// Print the closed-form bound report as JSON.
    Bound,
    /// Solve the size-based replication profile and write it out.
    Optimize,
    /// Run the configured experiment over a list of n or lambda values.
    Sweep {
        /// Which parameter to sweep: n | lambda.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated list of values.
        #[arg(long, value_delimiter = ',', num_args = 0.., default_value = "")]
        values: Vec<String>,
    },
    /// Run the fast invariant suite and report pass/fail per property.
    Validate {
        /// CSV table of per-size minimum-order-statistic means
        /// (`x,v1,v2,...`) to check in place of the configured model.
        #[arg(long)]
        convexity_table: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let path = cli
        .config
        .clone()
        .ok_or_else(|| anyhow::anyhow!("--config PATH is required"))?;
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(formats) = &cli.format {
        cfg.output.formats = formats.clone();
        cfg.validate()?;
    }
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((cfg, base_dir))
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global().ok();
    }
    let (cfg, base_dir) = load_config(cli)?;
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    match &cli.command {
        Command::Simulate => commands::cmd_simulate(&cfg, &base_dir, &out_dir),
        Command::Bound => commands::cmd_bound(&cfg),
        Command::Optimize => commands::cmd_optimize(&cfg, &out_dir),
        Command::Sweep { param, values } => {
            let parsed: Vec<f64> = values
                .iter()
                .filter(|v| !v.is_empty())
                .map(|v| v.parse().map_err(|e| anyhow::anyhow!("bad sweep value {v:?}: {e}")))
                .collect::<anyhow::Result<_>>()?;
            commands::cmd_sweep(&cfg, &base_dir, &out_dir, *param, &parsed)
        }
        Command::Validate { convexity_table } => {
            commands::cmd_validate(&cfg, convexity_table.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
