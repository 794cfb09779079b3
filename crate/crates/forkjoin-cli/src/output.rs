//! Machine-readable outputs. Every file embeds the resolved config and seed
//! on a leading `#` provenance line (CSV) or as a field (JSON); CSV uses
//! `.` decimals, LF line endings, and a header row, so files are bit-exact
//! across platforms for a fixed seed.

use crate::config::ExperimentConfig;
use forkjoin_core::engine::SimulationResult;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

pub fn provenance_line(config: &ExperimentConfig, seed: u64) -> String {
    let meta = serde_json::json!({ "seed": seed, "config": config });
    format!("# {meta}")
}

pub fn write_jobs_csv(
    path: &Path,
    config: &ExperimentConfig,
    seed: u64,
    res: &SimulationResult,
) -> anyhow::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", provenance_line(config, seed))?;
    writeln!(
        out,
        "job_id,arrival_time,task_size,subsystem,replicas_started,delay,service_time,queueing_time"
    )?;
    for j in &res.jobs {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            j.job_id,
            j.arrival_time,
            j.task_size,
            j.subsystem,
            j.replicas_started,
            j.delay,
            j.service_time,
            j.queueing_delay
        )?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}
