//! Dispatching/replication policies behind a single driver interface
//! consumed by the simulation engine.
//!
//! A policy reacts to three kinds of engine callbacks (job arrival, servers
//! turning idle, a queued replica starting service) by emitting actions:
//! batch-start replicas on idle servers, append replicas to server FIFO
//! queues, or cancel a job's still-queued replicas. All randomness comes
//! from the context's named streams, so runs replay deterministically.

mod baseline;
mod batch;
mod dq;
mod partition;
mod sbdq;

pub use partition::{DqPartition, FrecPartition, SbPartition, SbSubsystem};

use crate::engine::JobId;
use crate::model::{OrderStatTable, SystemParams};
use crate::optimizer::ReplicationProfile;
use crate::{Error, Result};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::ops::Range;

pub type ServerId = u32;

/// Instruction emitted by a policy for the engine to apply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Record the subsystem a job was routed to (metrics and partition
    /// enforcement).
    Assign { job: JobId, subsystem: u32 },
    /// Start one replica of `job` on each listed server; every server must
    /// be idle.
    StartBatch { job: JobId, servers: Vec<ServerId> },
    /// Append one replica of `job` to each listed server's FIFO; replicas on
    /// idle servers start immediately.
    Enqueue { job: JobId, servers: Vec<ServerId> },
    /// Cancel all still-queued replicas of `job`.
    CancelQueued { job: JobId },
    /// A dispatcher queue released `job`; recorded in the event trace.
    Wake { queue: u32, job: JobId },
}

/// What a policy sees when the engine calls it.
///
/// Actions are applied after the callback returns, so idle queries go
/// through the context, which overlays the servers already committed by
/// actions pushed earlier in the same callback.
pub struct PolicyCtx<'a> {
    pub now: f64,
    tracker: &'a IdleTracker,
    claimed: BTreeSet<ServerId>,
    /// Stream for subsystem routing coins.
    pub routing: &'a mut ChaCha8Rng,
    /// Stream for uniform server sampling.
    pub dispatch: &'a mut ChaCha8Rng,
    actions: &'a mut Vec<Action>,
}

impl<'a> PolicyCtx<'a> {
    pub(crate) fn new(
        now: f64,
        tracker: &'a IdleTracker,
        routing: &'a mut ChaCha8Rng,
        dispatch: &'a mut ChaCha8Rng,
        actions: &'a mut Vec<Action>,
    ) -> Self {
        Self { now, tracker, claimed: BTreeSet::new(), routing, dispatch, actions }
    }

    /// Idle servers of the pool, net of servers claimed by earlier actions
    /// in this callback.
    pub fn idle_count(&self, pool: usize) -> usize {
        let p = &self.tracker.pools[pool];
        p.idle.len() - self.claimed.range(p.range.clone()).count()
    }

    /// The `count` lowest-id unclaimed idle servers of the pool, or `None`
    /// if fewer are available.
    pub fn lowest_idle(&self, pool: usize, count: usize) -> Option<Vec<ServerId>> {
        let p = &self.tracker.pools[pool];
        let out: Vec<ServerId> = p
            .idle
            .iter()
            .filter(|s| !self.claimed.contains(s))
            .take(count)
            .copied()
            .collect();
        (out.len() == count).then_some(out)
    }

    pub fn assign(&mut self, job: JobId, subsystem: u32) {
        self.actions.push(Action::Assign { job, subsystem });
    }

    pub fn start_batch(&mut self, job: JobId, servers: Vec<ServerId>) {
        self.claimed.extend(servers.iter().copied());
        self.actions.push(Action::StartBatch { job, servers });
    }

    pub fn enqueue(&mut self, job: JobId, servers: Vec<ServerId>) {
        self.actions.push(Action::Enqueue { job, servers });
    }

    pub fn cancel_queued(&mut self, job: JobId) {
        self.actions.push(Action::CancelQueued { job });
    }

    pub fn wake(&mut self, queue: u32, job: JobId) {
        self.actions.push(Action::Wake { queue, job });
    }
}

/// Engine-maintained idle-server bookkeeping for the pools a policy
/// registers. Selection is lowest-id-first throughout.
pub struct IdleTracker {
    pools: Vec<Pool>,
    pool_of: Vec<u32>,
}

struct Pool {
    range: Range<ServerId>,
    idle: BTreeSet<ServerId>,
}

const NO_POOL: u32 = u32::MAX;

impl IdleTracker {
    /// All servers start idle.
    pub(crate) fn new(n: u32, ranges: Vec<Range<ServerId>>) -> Result<Self> {
        let mut pool_of = vec![NO_POOL; n as usize];
        let mut pools = Vec::with_capacity(ranges.len());
        for (i, range) in ranges.into_iter().enumerate() {
            if range.end > n {
                return Err(Error::Config(format!("pool {range:?} exceeds server count {n}")));
            }
            for s in range.clone() {
                if pool_of[s as usize] != NO_POOL {
                    return Err(Error::Config(format!("server {s} assigned to two pools")));
                }
                pool_of[s as usize] = i as u32;
            }
            pools.push(Pool { idle: range.clone().collect(), range });
        }
        Ok(Self { pools, pool_of })
    }

    pub fn idle_count(&self, pool: usize) -> usize {
        self.pools[pool].idle.len()
    }

    /// The `count` lowest-id idle servers of the pool, or `None` if fewer
    /// are idle.
    pub fn lowest_idle(&self, pool: usize, count: usize) -> Option<Vec<ServerId>> {
        let p = &self.pools[pool];
        if p.idle.len() < count {
            return None;
        }
        Some(p.idle.iter().take(count).copied().collect())
    }

    pub fn pool_range(&self, pool: usize) -> Range<ServerId> {
        self.pools[pool].range.clone()
    }

    pub(crate) fn set_idle(&mut self, s: ServerId) {
        let p = self.pool_of[s as usize];
        if p != NO_POOL {
            self.pools[p as usize].idle.insert(s);
        }
    }

    pub(crate) fn set_busy(&mut self, s: ServerId) {
        let p = self.pool_of[s as usize];
        if p != NO_POOL {
            self.pools[p as usize].idle.remove(&s);
        }
    }
}

/// Per-subsystem counters reported at the end of a run.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct SubsystemStats {
    /// Replicas started per job routed here when dispatched in full.
    pub batch: u32,
    pub jobs_routed: u64,
    /// Jobs sent to the small pool instead of batch-started (two-pool
    /// policies).
    pub jobs_diverted: u64,
    /// Jobs parked in a dispatcher queue before starting.
    pub jobs_deferred: u64,
    /// Time integral of "fewer than `batch` idle servers in the large pool";
    /// divided by the run length this is the arrival-averaged divert
    /// probability predicted by PASTA.
    pub divert_condition_time: f64,
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct PolicyRunStats {
    pub subsystems: Vec<SubsystemStats>,
}

/// Engine-facing policy behavior. Implementations own their mutable
/// dispatcher state; one driver instance serves exactly one run.
pub trait PolicyDriver {
    fn name(&self) -> &'static str;

    /// Disjoint server ranges the engine should track idleness for.
    fn pools(&self) -> Vec<Range<ServerId>>;

    /// Servers a job assigned to `subsystem` may legally receive replicas
    /// on.
    fn allowed_range(&self, subsystem: u32) -> Range<ServerId>;

    fn on_arrival(&mut self, job: JobId, x: f64, ctx: &mut PolicyCtx);

    /// Called once per event after servers turned idle.
    fn on_servers_idle(&mut self, ctx: &mut PolicyCtx);

    /// Called for every replica that transitions into service.
    fn on_service_start(&mut self, _job: JobId, _server: ServerId, _ctx: &mut PolicyCtx) {}

    fn on_job_departed(&mut self, _job: JobId) {}

    /// Final bookkeeping flush at the end of the run.
    fn on_end(&mut self, _now: f64) {}

    fn stats(&self) -> PolicyRunStats {
        PolicyRunStats::default()
    }
}

/// A fully built policy: immutable partition data plus everything needed to
/// spawn a fresh per-run driver.
#[derive(Debug, Clone)]
pub enum PolicyInstance {
    Baseline {
        n: u32,
        k: u32,
    },
    Frec {
        partition: FrecPartition,
        /// Replicate-to-all-servers semantics instead of the equivalent
        /// dispatcher queue; for trace-equivalence checks on small n.
        literal: bool,
    },
    Dq {
        partition: DqPartition,
    },
    SbFrec {
        partition: SbPartition,
    },
    SbDq {
        partition: SbPartition,
    },
}

impl PolicyInstance {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Baseline { .. } => "baseline",
            Self::Frec { literal: false, .. } => "frec",
            Self::Frec { literal: true, .. } => "frec-literal",
            Self::Dq { .. } => "dq",
            Self::SbFrec { .. } => "sb-frec",
            Self::SbDq { .. } => "sb-dq",
        }
    }

    /// Mean replicas started per job when every job is dispatched in full
    /// batches (exact for the batch policies, an asymptote for two-pool
    /// dispatch).
    pub fn mean_batch_replicas(&self) -> Option<f64> {
        match self {
            Self::Baseline { k, .. } => Some(*k as f64),
            Self::Frec { partition, .. } => Some(
                partition.q * partition.batch_large as f64
                    + (1.0 - partition.q) * (partition.batch_large - 1) as f64,
            ),
            Self::Dq { partition } => Some(
                partition.q * partition.batch_large as f64
                    + (1.0 - partition.q) * (partition.batch_large - 1) as f64,
            ),
            Self::SbFrec { .. } | Self::SbDq { .. } => None,
        }
    }

    pub(crate) fn driver(&self) -> Box<dyn PolicyDriver> {
        match self {
            Self::Baseline { n, k } => Box::new(baseline::BaselineDriver::new(*n, *k)),
            Self::Frec { partition, literal } => {
                Box::new(batch::BatchDriver::from_frec(partition.clone(), *literal))
            }
            Self::Dq { partition } => Box::new(dq::DqDriver::new(partition.clone())),
            Self::SbFrec { partition } => {
                Box::new(batch::BatchDriver::from_sb(partition.clone()))
            }
            Self::SbDq { partition } => Box::new(sbdq::SbDqDriver::new(partition.clone())),
        }
    }
}

/// Uniform random dispatch of k replicas, no redundancy, no cancellation.
pub fn build_baseline(params: &SystemParams) -> PolicyInstance {
    PolicyInstance::Baseline { n: params.n(), k: params.k() }
}

/// Two-subsystem batch dispatch with early cancellation.
pub fn build_frec(params: &SystemParams) -> Result<PolicyInstance> {
    Ok(PolicyInstance::Frec { partition: partition::frec_partition(params)?, literal: false })
}

/// Literal-semantics variant of [`build_frec`] (replicate to every server,
/// cancel queued copies once the batch has started).
pub fn build_frec_literal(params: &SystemParams) -> Result<PolicyInstance> {
    Ok(PolicyInstance::Frec { partition: partition::frec_partition(params)?, literal: true })
}

/// Two-subsystem large/small pool dispatch.
pub fn build_dq(params: &SystemParams) -> Result<PolicyInstance> {
    Ok(PolicyInstance::Dq { partition: partition::dq_partition(params)? })
}

/// Size-based batch dispatch driven by a replication profile.
pub fn build_sb_frec(
    params: &SystemParams,
    profile: &ReplicationProfile,
    table: &OrderStatTable,
) -> Result<PolicyInstance> {
    Ok(PolicyInstance::SbFrec { partition: partition::sb_partition(params, profile, table, false)? })
}

/// Size-based large/small pool dispatch driven by a replication profile.
pub fn build_sb_dq(
    params: &SystemParams,
    profile: &ReplicationProfile,
    table: &OrderStatTable,
) -> Result<PolicyInstance> {
    Ok(PolicyInstance::SbDq { partition: partition::sb_partition(params, profile, table, true)? })
}
