//! Two-pool dispatch: batches of replicas go to idle servers of the large
//! pool; when fewer than a full batch are idle there, the job is diverted
//! and exactly k replicas are queued at k random servers of the small pool.

use super::{DqPartition, PolicyCtx, PolicyDriver, PolicyRunStats, ServerId, SubsystemStats};
use crate::engine::JobId;
use rand::Rng;
use std::ops::Range;

struct Sub {
    large: Range<ServerId>,
    small: Range<ServerId>,
    batch: u32,
    pool: Option<usize>,
    stats: SubsystemStats,
    /// Time integral of "fewer than `batch` idle in the large pool", for the
    /// PASTA cross-check against the divert fraction.
    condition_since: f64,
    condition_on: bool,
}

impl Sub {
    fn advance(&mut self, now: f64) {
        if self.condition_on {
            self.stats.divert_condition_time += now - self.condition_since;
        }
        self.condition_since = now;
    }

    fn refresh(&mut self, ctx: &PolicyCtx) {
        if let Some(pool) = self.pool {
            self.condition_on = ctx.idle_count(pool) < self.batch as usize;
        }
    }
}

pub(super) struct DqDriver {
    q: f64,
    k: u32,
    subs: Vec<Sub>,
    full_span: [Range<ServerId>; 2],
}

impl DqDriver {
    pub(super) fn new(p: DqPartition) -> Self {
        let mut pool = 0;
        let subs = p
            .subs
            .iter()
            .map(|s| {
                let id = (!s.large.is_empty()).then(|| {
                    let i = pool;
                    pool += 1;
                    i
                });
                Sub {
                    large: s.large.clone(),
                    small: s.small.clone(),
                    batch: s.batch,
                    pool: id,
                    stats: SubsystemStats { batch: s.batch, ..Default::default() },
                    condition_since: 0.0,
                    condition_on: false,
                }
            })
            .collect();
        Self {
            q: p.q,
            k: p.k,
            subs,
            full_span: [
                p.subs[0].large.start..p.subs[0].small.end,
                p.subs[1].large.start..p.subs[1].small.end,
            ],
        }
    }
}

impl PolicyDriver for DqDriver {
    fn name(&self) -> &'static str {
        "dq"
    }

    fn pools(&self) -> Vec<Range<ServerId>> {
        self.subs
            .iter()
            .filter(|s| s.pool.is_some())
            .map(|s| s.large.clone())
            .collect()
    }

    fn allowed_range(&self, subsystem: u32) -> Range<ServerId> {
        self.full_span[subsystem as usize].clone()
    }

    fn on_arrival(&mut self, job: JobId, _x: f64, ctx: &mut PolicyCtx) {
        let u: f64 = ctx.routing.gen();
        let idx = usize::from(u >= self.q);
        ctx.assign(job, idx as u32);
        let k = self.k;
        let sub = &mut self.subs[idx];
        sub.advance(ctx.now);
        sub.stats.jobs_routed += 1;
        let pool = sub.pool.expect("jobs are never routed to an empty subsystem");
        match ctx.lowest_idle(pool, sub.batch as usize) {
            Some(servers) => {
                ctx.start_batch(job, servers);
                // the claim overlay already reflects the batch just pushed
                sub.condition_on = ctx.idle_count(pool) < sub.batch as usize;
            }
            None => {
                sub.stats.jobs_diverted += 1;
                sub.condition_on = true;
                let len = sub.small.len();
                let picks = rand::seq::index::sample(ctx.dispatch, len, k as usize);
                let servers: Vec<ServerId> =
                    picks.iter().map(|i| sub.small.start + i as ServerId).collect();
                ctx.enqueue(job, servers);
            }
        }
    }

    fn on_servers_idle(&mut self, ctx: &mut PolicyCtx) {
        for sub in &mut self.subs {
            sub.advance(ctx.now);
            sub.refresh(ctx);
        }
    }

    fn on_end(&mut self, now: f64) {
        for sub in &mut self.subs {
            sub.advance(now);
        }
    }

    fn stats(&self) -> PolicyRunStats {
        PolicyRunStats { subsystems: self.subs.iter().map(|s| s.stats.clone()).collect() }
    }
}
