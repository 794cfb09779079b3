use super::event::EventRecord;
use super::JobId;
use crate::policies::PolicyRunStats;
use serde::{Deserialize, Serialize};

/// Per-job delay decomposition. The delay `W` is the time from arrival to
/// the k-th replica completion; the service time `W^s` is the total time at
/// least one replica was in service; the queueing delay is the remainder, so
/// `W = W^s + W^q` holds exactly for every job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobMetrics {
    pub job_id: JobId,
    pub arrival_time: f64,
    pub task_size: f64,
    pub subsystem: u32,
    pub replicas_started: u32,
    pub delay: f64,
    pub service_time: f64,
    pub queueing_delay: f64,
}

/// Output of one simulation run.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    /// Jobs that arrived in the observation window `(warmup, horizon -
    /// drain_margin]` and departed before the run ended, in arrival order.
    pub jobs: Vec<JobMetrics>,
    pub arrived: u64,
    pub departed: u64,
    /// Jobs still live when the run ended.
    pub censored: u64,
    pub event_count: u64,
    /// Time-average number of busy servers over `(warmup, end_time)`.
    pub time_avg_busy_servers: f64,
    /// Time-average number of live jobs over `(warmup, end_time)`.
    pub time_avg_live_jobs: f64,
    /// Arrival rate measured over `(warmup, end_time)`.
    pub effective_arrival_rate: f64,
    /// Sum over servers of cumulative busy time.
    pub busy_time_total: f64,
    /// Sum over finished and cancelled replicas of realized in-service time.
    pub replica_service_total: f64,
    /// Live-job counts sampled on a uniform time grid (stability checks).
    pub live_samples: Vec<(f64, f64)>,
    /// Set when the run aborted early on a suspected-unstable state.
    pub aborted: Option<String>,
    pub end_time: f64,
    pub warmup: f64,
    pub wall_seconds: f64,
    pub policy_stats: PolicyRunStats,
    pub trace: Option<Vec<EventRecord>>,
}

impl SimulationResult {
    /// Fraction of observed jobs with a strictly positive queueing delay.
    pub fn frac_positive_wait(&self) -> f64 {
        if self.jobs.is_empty() {
            return 0.0;
        }
        self.jobs.iter().filter(|j| j.queueing_delay > 0.0).count() as f64 / self.jobs.len() as f64
    }

    pub fn mean_delay(&self) -> f64 {
        mean(self.jobs.iter().map(|j| j.delay))
    }

    pub fn mean_service_time(&self) -> f64 {
        mean(self.jobs.iter().map(|j| j.service_time))
    }

    pub fn mean_queueing_delay(&self) -> f64 {
        mean(self.jobs.iter().map(|j| j.queueing_delay))
    }

    pub fn mean_replicas_started(&self) -> f64 {
        mean(self.jobs.iter().map(|j| j.replicas_started as f64))
    }

    /// `|L - lambda * W| / L` over the observation window.
    pub fn little_law_residual(&self) -> f64 {
        if self.time_avg_live_jobs <= 0.0 {
            return 0.0;
        }
        let lw = self.effective_arrival_rate * self.mean_delay();
        (self.time_avg_live_jobs - lw).abs() / self.time_avg_live_jobs
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
