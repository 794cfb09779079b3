//! Size-based two-pool dispatch: a job routed to the subsystem for `r`
//! replicas batch-starts on `r` idle large-pool servers, falls back to `r`
//! idle small-pool servers, and otherwise waits in a virtual dispatcher FIFO
//! that is re-checked against both pools whenever servers of the subsystem
//! turn idle.

use super::{PolicyCtx, PolicyDriver, PolicyRunStats, SbPartition, ServerId, SubsystemStats};
use crate::engine::JobId;
use rand::Rng;
use std::collections::VecDeque;
use std::ops::Range;

struct Sub {
    full: Range<ServerId>,
    r: u32,
    large_pool: usize,
    small_pool: usize,
    queue: VecDeque<JobId>,
    stats: SubsystemStats,
}

pub(super) struct SbDqDriver {
    partition: SbPartition,
    subs: Vec<Sub>,
}

impl SbDqDriver {
    pub(super) fn new(p: SbPartition) -> Self {
        let subs = p
            .subs
            .iter()
            .enumerate()
            .map(|(i, s)| Sub {
                full: s.full.clone(),
                r: s.r,
                large_pool: 2 * i,
                small_pool: 2 * i + 1,
                queue: VecDeque::new(),
                stats: SubsystemStats { batch: s.r, ..Default::default() },
            })
            .collect();
        Self { partition: p, subs }
    }

    fn try_dispatch(sub: &mut Sub, job: JobId, ctx: &mut PolicyCtx) -> bool {
        let want = sub.r as usize;
        if let Some(servers) = ctx.lowest_idle(sub.large_pool, want) {
            ctx.start_batch(job, servers);
            return true;
        }
        if let Some(servers) = ctx.lowest_idle(sub.small_pool, want) {
            sub.stats.jobs_diverted += 1;
            ctx.start_batch(job, servers);
            return true;
        }
        false
    }
}

impl PolicyDriver for SbDqDriver {
    fn name(&self) -> &'static str {
        "sb-dq"
    }

    fn pools(&self) -> Vec<Range<ServerId>> {
        self.partition
            .subs
            .iter()
            .flat_map(|s| [s.large.clone(), s.small.clone()])
            .collect()
    }

    fn allowed_range(&self, subsystem: u32) -> Range<ServerId> {
        self.subs[subsystem as usize].full.clone()
    }

    fn on_arrival(&mut self, job: JobId, x: f64, ctx: &mut PolicyCtx) {
        let row = self.partition.route_row(x);
        let u: f64 = ctx.routing.gen();
        let mut idx = row.last().expect("kernel rows are nonempty").0;
        let mut acc = 0.0;
        for &(sub, prob) in row {
            acc += prob;
            if u < acc {
                idx = sub;
                break;
            }
        }
        ctx.assign(job, idx as u32);
        let sub = &mut self.subs[idx];
        sub.stats.jobs_routed += 1;
        if !sub.queue.is_empty() || !Self::try_dispatch(sub, job, ctx) {
            sub.stats.jobs_deferred += 1;
            sub.queue.push_back(job);
        }
    }

    fn on_servers_idle(&mut self, ctx: &mut PolicyCtx) {
        for (idx, sub) in self.subs.iter_mut().enumerate() {
            while let Some(&job) = sub.queue.front() {
                if !Self::try_dispatch(sub, job, ctx) {
                    break;
                }
                sub.queue.pop_front();
                ctx.wake(idx as u32, job);
            }
        }
    }

    fn stats(&self) -> PolicyRunStats {
        PolicyRunStats { subsystems: self.subs.iter().map(|s| s.stats.clone()).collect() }
    }
}
