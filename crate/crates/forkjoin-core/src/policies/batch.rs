//! Batch idle-server dispatch with early cancellation, in its two-subsystem
//! and size-based forms.
//!
//! Default mode uses the behavioral equivalent of replicate-to-everyone: a
//! per-subsystem FIFO dispatcher queue that seizes the first `batch` servers
//! to be simultaneously idle. All replicas of a job start together and, for
//! k = 1, leave together, so each subsystem serves whole-job blocks in FIFO
//! order exactly as the literal construction does. Literal mode materializes
//! a replica in every server queue of the subsystem and cancels the leftover
//! queued copies once `batch` of them have started; it exists to check the
//! equivalence on small systems.

use super::{FrecPartition, PolicyCtx, PolicyDriver, PolicyRunStats, SbPartition, ServerId, SubsystemStats};
use crate::engine::JobId;
use rand::Rng;
use std::collections::{HashMap, VecDeque};
use std::ops::Range;

enum Routing {
    /// Subsystem 0 with probability `q`, else subsystem 1.
    Coin { q: f64 },
    /// Size-based kernel rows.
    Kernel(SbPartition),
}

struct Sub {
    range: Range<ServerId>,
    batch: u32,
    /// Tracker pool id; unset for empty subsystems.
    pool: Option<usize>,
    queue: VecDeque<JobId>,
    stats: SubsystemStats,
}

pub(super) struct BatchDriver {
    name: &'static str,
    subs: Vec<Sub>,
    routing: Routing,
    literal: bool,
    /// Literal mode: per-job countdown to early cancellation.
    literal_jobs: HashMap<JobId, (u32, u32)>,
    job_subsystem: HashMap<JobId, usize>,
}

impl BatchDriver {
    pub(super) fn from_frec(p: FrecPartition, literal: bool) -> Self {
        let mut pool = 0;
        let subs = [(p.sub1, p.batch_large), (p.sub2, p.batch_large - 1)]
            .into_iter()
            .map(|(range, batch)| {
                let id = (!range.is_empty()).then(|| {
                    let i = pool;
                    pool += 1;
                    i
                });
                Sub {
                    range,
                    batch,
                    pool: id,
                    queue: VecDeque::new(),
                    stats: SubsystemStats { batch, ..Default::default() },
                }
            })
            .collect();
        Self {
            name: if literal { "frec-literal" } else { "frec" },
            subs,
            routing: Routing::Coin { q: p.q },
            literal,
            literal_jobs: HashMap::new(),
            job_subsystem: HashMap::new(),
        }
    }

    pub(super) fn from_sb(p: SbPartition) -> Self {
        let subs = p
            .subs
            .iter()
            .enumerate()
            .map(|(i, s)| Sub {
                range: s.full.clone(),
                batch: s.r,
                pool: Some(i),
                queue: VecDeque::new(),
                stats: SubsystemStats { batch: s.r, ..Default::default() },
            })
            .collect();
        Self {
            name: "sb-frec",
            subs,
            routing: Routing::Kernel(p),
            literal: false,
            literal_jobs: HashMap::new(),
            job_subsystem: HashMap::new(),
        }
    }

    fn pick_subsystem(&self, x: f64, ctx: &mut PolicyCtx) -> usize {
        match &self.routing {
            Routing::Coin { q } => {
                let u: f64 = ctx.routing.gen();
                usize::from(u >= *q)
            }
            Routing::Kernel(p) => {
                let row = p.route_row(x);
                let u: f64 = ctx.routing.gen();
                let mut acc = 0.0;
                for &(sub, prob) in row {
                    acc += prob;
                    if u < acc {
                        return sub;
                    }
                }
                row.last().expect("kernel rows are nonempty").0
            }
        }
    }
}

impl PolicyDriver for BatchDriver {
    fn name(&self) -> &'static str {
        self.name
    }

    fn pools(&self) -> Vec<Range<ServerId>> {
        self.subs
            .iter()
            .filter(|s| s.pool.is_some())
            .map(|s| s.range.clone())
            .collect()
    }

    fn allowed_range(&self, subsystem: u32) -> Range<ServerId> {
        self.subs[subsystem as usize].range.clone()
    }

    fn on_arrival(&mut self, job: JobId, x: f64, ctx: &mut PolicyCtx) {
        let idx = self.pick_subsystem(x, ctx);
        ctx.assign(job, idx as u32);
        let sub = &mut self.subs[idx];
        sub.stats.jobs_routed += 1;
        let pool = sub.pool.expect("jobs are never routed to an empty subsystem");
        let batch = sub.batch as usize;
        if sub.queue.is_empty() {
            if let Some(servers) = ctx.lowest_idle(pool, batch) {
                ctx.start_batch(job, servers);
                return;
            }
        }
        sub.stats.jobs_deferred += 1;
        if self.literal {
            // replicate to every server in the subsystem; early cancellation
            // fires once `batch` replicas have started
            self.literal_jobs.insert(job, (sub.batch, 0));
            self.job_subsystem.insert(job, idx);
            ctx.enqueue(job, sub.range.clone().collect());
        } else {
            sub.queue.push_back(job);
        }
    }

    fn on_servers_idle(&mut self, ctx: &mut PolicyCtx) {
        for (idx, sub) in self.subs.iter_mut().enumerate() {
            let Some(pool) = sub.pool else { continue };
            while let Some(&job) = sub.queue.front() {
                match ctx.lowest_idle(pool, sub.batch as usize) {
                    Some(servers) => {
                        sub.queue.pop_front();
                        ctx.wake(idx as u32, job);
                        ctx.start_batch(job, servers);
                    }
                    None => break,
                }
            }
        }
    }

    fn on_service_start(&mut self, job: JobId, _server: ServerId, ctx: &mut PolicyCtx) {
        if !self.literal {
            return;
        }
        if let Some((target, started)) = self.literal_jobs.get_mut(&job) {
            *started += 1;
            if *started >= *target {
                self.literal_jobs.remove(&job);
                ctx.cancel_queued(job);
            }
        }
    }

    fn on_job_departed(&mut self, job: JobId) {
        self.literal_jobs.remove(&job);
        self.job_subsystem.remove(&job);
    }

    fn stats(&self) -> PolicyRunStats {
        PolicyRunStats { subsystems: self.subs.iter().map(|s| s.stats.clone()).collect() }
    }
}
