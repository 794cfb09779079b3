use super::{PolicyCtx, PolicyDriver, PolicyRunStats, ServerId, SubsystemStats};
use crate::engine::JobId;
use std::ops::Range;

/// Dispatch k replicas to k distinct servers chosen uniformly at random; no
/// extra replicas, no early cancellation.
pub(super) struct BaselineDriver {
    n: u32,
    k: u32,
    routed: u64,
}

impl BaselineDriver {
    pub(super) fn new(n: u32, k: u32) -> Self {
        Self { n, k, routed: 0 }
    }
}

impl PolicyDriver for BaselineDriver {
    fn name(&self) -> &'static str {
        "baseline"
    }

    fn pools(&self) -> Vec<Range<ServerId>> {
        Vec::new()
    }

    fn allowed_range(&self, _subsystem: u32) -> Range<ServerId> {
        0..self.n
    }

    fn on_arrival(&mut self, job: JobId, _x: f64, ctx: &mut PolicyCtx) {
        self.routed += 1;
        let picks = rand::seq::index::sample(ctx.dispatch, self.n as usize, self.k as usize);
        let servers: Vec<ServerId> = picks.iter().map(|i| i as ServerId).collect();
        ctx.enqueue(job, servers);
    }

    fn on_servers_idle(&mut self, _ctx: &mut PolicyCtx) {}

    fn stats(&self) -> PolicyRunStats {
        PolicyRunStats {
            subsystems: vec![SubsystemStats {
                batch: self.k,
                jobs_routed: self.routed,
                ..Default::default()
            }],
        }
    }
}
