use super::*;
use crate::model::sample_slowdown;
use crate::policies::{PolicyCtx, PolicyRunStats};
use std::collections::HashMap as StdHashMap;

fn params(n: u32, k: u32, lambda: f64) -> SystemParams {
    SystemParams::new(n, k, lambda, 1.0, 0.6).unwrap()
}

fn unit_sizes() -> TaskSizeDistribution {
    TaskSizeDistribution::deterministic(1.0).unwrap()
}

fn exp_slowdowns() -> SlowdownModel {
    SlowdownModel::exponential(1.0).unwrap()
}

/// Replay the slowdowns the engine will draw for a job, in replica-start
/// order.
fn replay_slowdowns(seed: u64, job: JobId, model: &SlowdownModel, x: f64, count: usize) -> Vec<f64> {
    let mut rng = RngHandle::new(seed, streams::JOB_SLOWDOWNS + job).rng();
    (0..count).map(|_| sample_slowdown(model, x, &mut rng)).collect()
}

#[test]
fn accrue_tracks_interval_union() {
    // one replica over [0,2], none over [2,5], two over [5,6]: clock = 3
    let mut job = Job {
        arrival: 0.0,
        x: 1.0,
        subsystem: 0,
        completions: 0,
        replicas_started: 0,
        live_replicas: Vec::new(),
        in_service_count: 0,
        service_clock: 0.0,
        last_transition: 0.0,
        rng: RngHandle::new(0, streams::JOB_SLOWDOWNS).rng(),
    };
    job.accrue(0.0);
    job.in_service_count = 1;
    job.accrue(2.0);
    job.in_service_count = 0;
    job.accrue(5.0);
    job.in_service_count = 2;
    job.accrue(5.0); // same-timestamp sibling transition: no double counting
    job.accrue(6.0);
    assert_eq!(job.service_clock, 3.0);
}

#[test]
fn no_arrivals_within_horizon() {
    let p = params(4, 1, 1e-12);
    let policy = crate::policies::build_baseline(&p);
    let cfg = SimConfig::new(100.0, 10.0, 1);
    let res = run_simulation(&p, &unit_sizes(), &exp_slowdowns(), &policy, &cfg).unwrap();
    assert_eq!(res.arrived, 0);
    assert_eq!(res.departed, 0);
    assert_eq!(res.time_avg_busy_servers, 0.0);
    assert!(res.jobs.is_empty());
}

#[test]
fn uncontended_jobs_serve_exactly_one_replica_draw() {
    // light traffic: any job with zero queueing delay must have
    // W = W^s = x (1 + S) with S the first draw of its own stream
    let p = params(2, 1, 0.05);
    let policy = crate::policies::build_baseline(&p);
    let cfg = SimConfig::new(2000.0, 10.0, 42);
    let res = run_simulation(&p, &unit_sizes(), &exp_slowdowns(), &policy, &cfg).unwrap();
    assert!(res.jobs.len() > 20);
    let mut uncontended = 0;
    for j in &res.jobs {
        assert!(j.queueing_delay >= 0.0);
        assert_eq!(j.delay, j.service_time + j.queueing_delay);
        if j.queueing_delay == 0.0 {
            uncontended += 1;
            let s = replay_slowdowns(42, j.job_id, &exp_slowdowns(), j.task_size, 1)[0];
            let expected = j.task_size * (1.0 + s);
            assert!((j.service_time - expected).abs() < 1e-12, "job {}", j.job_id);
        }
    }
    assert!(uncontended > 10);
}

/// Test-only policy: batch-start `batch` replicas on the lowest idle servers
/// of one pool, park arrivals in a FIFO otherwise.
struct FixedBatch {
    n: u32,
    batch: u32,
    queue: std::collections::VecDeque<JobId>,
}

impl PolicyDriver for FixedBatch {
    fn name(&self) -> &'static str {
        "fixed-batch"
    }

    fn pools(&self) -> Vec<std::ops::Range<u32>> {
        vec![0..self.n]
    }

    fn allowed_range(&self, _s: u32) -> std::ops::Range<u32> {
        0..self.n
    }

    fn on_arrival(&mut self, job: JobId, _x: f64, ctx: &mut PolicyCtx) {
        if self.queue.is_empty() {
            if let Some(servers) = ctx.lowest_idle(0, self.batch as usize) {
                ctx.start_batch(job, servers);
                return;
            }
        }
        self.queue.push_back(job);
    }

    fn on_servers_idle(&mut self, ctx: &mut PolicyCtx) {
        while let Some(&job) = self.queue.front() {
            match ctx.lowest_idle(0, self.batch as usize) {
                Some(servers) => {
                    self.queue.pop_front();
                    ctx.wake(0, job);
                    ctx.start_batch(job, servers);
                }
                None => break,
            }
        }
    }

    fn stats(&self) -> PolicyRunStats {
        PolicyRunStats::default()
    }
}

struct BusyParity {
    n: u32,
    ok: bool,
}

impl Observer for BusyParity {
    fn after_event(&mut self, _event: &EventRecord, probe: &dyn SimProbe) {
        if probe.busy_in_range(0..self.n) % 2 != 0 {
            self.ok = false;
        }
    }
}

#[test]
fn any_one_of_two_cancels_sibling_and_frees_both_servers() {
    // pairs start together; the first completion cancels the sibling at the
    // same timestamp, so the busy count stays even at every event boundary
    let p = params(4, 1, 0.3);
    let sizes = unit_sizes();
    let model = exp_slowdowns();
    let cfg = SimConfig::new(500.0, 0.0, 7).with_trace();
    let mut driver: Box<dyn PolicyDriver> =
        Box::new(FixedBatch { n: 4, batch: 2, queue: Default::default() });
    let mut sim = Sim::new(&p, &sizes, &model, &cfg, driver.as_ref()).unwrap();
    let mut obs = BusyParity { n: 4, ok: true };
    sim.run(driver.as_mut(), Some(&mut obs)).unwrap();
    let res = sim.finish(driver.as_ref(), std::time::Instant::now());
    assert!(obs.ok, "busy count went odd");
    assert!(res.departed > 50);
    // every job's service time is x (1 + min(S1, S2)) for its own two draws
    for j in &res.jobs {
        let s = replay_slowdowns(7, j.job_id, &model, j.task_size, 2);
        let expected = j.task_size * (1.0 + s[0].min(s[1]));
        assert!((j.service_time - expected).abs() < 1e-9, "job {}", j.job_id);
        assert_eq!(j.replicas_started, 2);
    }
    // and the trace shows dispatcher wakes whenever a job had to wait
    let trace = res.trace.as_ref().unwrap();
    assert!(trace.iter().any(|e| matches!(e.kind, EventKind::DispatcherWake { .. })));
}

/// Hand-traced scenario: three fixed-duration jobs through a 2-server batch
/// dispatcher. Job 0 seizes both servers; job 1 waits for the cancellation
/// wave of job 0 to free them; queued replicas start at the same timestamp
/// the cancellation happens.
#[test]
fn cancellation_wakes_queued_batch_at_same_timestamp() {
    let p = params(2, 1, 0.4);
    let sizes = unit_sizes();
    let model = exp_slowdowns();
    let cfg = SimConfig::new(40.0, 0.0, 3).with_trace();
    let mut driver: Box<dyn PolicyDriver> =
        Box::new(FixedBatch { n: 2, batch: 2, queue: Default::default() });
    let mut sim = Sim::new(&p, &sizes, &model, &cfg, driver.as_ref()).unwrap();
    sim.run(driver.as_mut(), None).unwrap();
    let res = sim.finish(driver.as_ref(), std::time::Instant::now());
    let trace = res.trace.unwrap();

    // replay the dynamics from the recorded arrivals and slowdowns
    let arrivals: Vec<(JobId, f64)> = trace
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::JobArrival { job } => Some((job, e.time)),
            _ => None,
        })
        .collect();
    let mut free_at = 0.0f64;
    let mut expected: StdHashMap<JobId, (f64, f64)> = StdHashMap::new(); // job -> (start, end)
    for &(job, t) in &arrivals {
        let s = replay_slowdowns(3, job, &model, 1.0, 2);
        let start = t.max(free_at);
        let end = start + (1.0 + s[0].min(s[1]));
        expected.insert(job, (start, end));
        free_at = end;
    }
    for j in &res.jobs {
        let (start, end) = expected[&j.job_id];
        assert!((j.delay - (end - j.arrival_time)).abs() < 1e-9);
        assert!((j.queueing_delay - (start - j.arrival_time)).abs() < 1e-9);
    }
    // wake records appear exactly at the completion times of their
    // predecessor jobs
    for w in trace.windows(2) {
        if let EventKind::DispatcherWake { .. } = w[1].kind {
            assert!(matches!(w[0].kind, EventKind::ServiceCompletion { .. }));
            assert_eq!(w[0].time, w[1].time);
            assert!(w[1].sequence > w[0].sequence);
        }
    }
}

struct ServiceClockOracle {
    tracked: StdHashMap<JobId, (f64, u32, f64)>, // job -> (last_t, count, accum)
    finished: StdHashMap<JobId, f64>,
}

impl Observer for ServiceClockOracle {
    fn after_event(&mut self, event: &EventRecord, probe: &dyn SimProbe) {
        let now = probe.now();
        for (_, (last, count, accum)) in self.tracked.iter_mut() {
            if *count > 0 {
                *accum += now - *last;
            }
            *last = now;
        }
        // drop departed jobs, record their accumulated service
        let departed: Vec<JobId> = self
            .tracked
            .keys()
            .copied()
            .filter(|j| probe.job_in_service_count(*j).is_none())
            .collect();
        for j in departed {
            let (_, _, accum) = self.tracked.remove(&j).unwrap();
            self.finished.insert(j, accum);
        }
        if let EventKind::JobArrival { job } = event.kind {
            self.tracked.insert(job, (now, 0, 0.0));
        }
        for (job, (_, count, _)) in self.tracked.iter_mut() {
            *count = probe.job_in_service_count(*job).unwrap_or(0);
        }
    }
}

#[test]
fn service_clock_matches_interval_union_oracle() {
    // k=2 baseline on a small loaded system: replica service intervals
    // overlap, separate, and straddle cancellations
    let p = params(6, 2, 0.4);
    let sizes = TaskSizeDistribution::exponential(1.0).unwrap();
    let model = exp_slowdowns();
    let policy = crate::policies::build_baseline(&p);
    let cfg = SimConfig::new(600.0, 0.0, 11);
    let mut oracle = ServiceClockOracle { tracked: Default::default(), finished: Default::default() };
    let res =
        run_simulation_observed(&p, &sizes, &model, &policy, &cfg, Some(&mut oracle)).unwrap();
    assert!(res.jobs.len() > 100);
    for j in &res.jobs {
        let got = oracle.finished.get(&j.job_id).copied().unwrap_or(f64::NAN);
        assert!(
            (got - j.service_time).abs() < 1e-9,
            "job {}: engine {} oracle {}",
            j.job_id,
            j.service_time,
            got
        );
    }
}

#[test]
fn conservation_work_accounting_and_determinism() {
    let p = params(8, 2, 0.4);
    let sizes = TaskSizeDistribution::exponential(1.0).unwrap();
    let model = exp_slowdowns();
    let policy = crate::policies::build_baseline(&p);
    let cfg = SimConfig::new(3000.0, 100.0, 5).with_trace();
    let a = run_simulation(&p, &sizes, &model, &policy, &cfg).unwrap();
    let b = run_simulation(&p, &sizes, &model, &policy, &cfg).unwrap();

    assert_eq!(a.arrived, a.departed + a.censored);
    let rel = (a.busy_time_total - a.replica_service_total).abs() / a.busy_time_total;
    assert!(rel < 1e-6, "work accounting off by {rel}");

    // bit-identical replay
    assert_eq!(a.jobs.len(), b.jobs.len());
    for (x, y) in a.jobs.iter().zip(&b.jobs) {
        assert_eq!(x.delay.to_bits(), y.delay.to_bits());
        assert_eq!(x.service_time.to_bits(), y.service_time.to_bits());
    }
    assert_eq!(format_trace(a.trace.as_ref().unwrap()), format_trace(b.trace.as_ref().unwrap()));

    // trace keys are strictly increasing in (time, sequence)
    let tr = a.trace.as_ref().unwrap();
    for w in tr.windows(2) {
        assert!(
            w[1].time > w[0].time || (w[1].time == w[0].time && w[1].sequence > w[0].sequence)
        );
    }
}

#[test]
fn little_law_on_a_long_stable_run() {
    let p = params(50, 1, 0.4);
    let policy = crate::policies::build_baseline(&p);
    // ~2e5 post-warmup jobs at job rate 20
    let cfg = SimConfig::new(11_000.0, 500.0, 9);
    let res = run_simulation(&p, &unit_sizes(), &exp_slowdowns(), &policy, &cfg).unwrap();
    assert!(res.jobs.len() > 200_000);
    let resid = res.little_law_residual();
    assert!(resid < 0.01, "Little's law residual {resid}");
}

#[test]
fn instability_aborts_with_partial_metrics() {
    let p = params(4, 1, 0.7); // per-server load 1.4
    let policy = crate::policies::build_baseline(&p);
    let cfg = SimConfig::new(50_000.0, 10.0, 2);
    let res = run_simulation(&p, &unit_sizes(), &exp_slowdowns(), &policy, &cfg).unwrap();
    let msg = res.aborted.expect("overloaded run must abort");
    assert!(msg.contains("instability suspected"));
    assert!(res.censored > 300);
    assert!(res.end_time < 50_000.0);
}

struct Outlaw {
    n: u32,
}

impl PolicyDriver for Outlaw {
    fn name(&self) -> &'static str {
        "outlaw"
    }

    fn pools(&self) -> Vec<std::ops::Range<u32>> {
        vec![0..2]
    }

    fn allowed_range(&self, _s: u32) -> std::ops::Range<u32> {
        0..2
    }

    fn on_arrival(&mut self, job: JobId, _x: f64, ctx: &mut PolicyCtx) {
        // dispatches outside its declared subsystem
        ctx.enqueue(job, vec![self.n - 1]);
    }

    fn on_servers_idle(&mut self, _ctx: &mut PolicyCtx) {}
}

#[test]
fn dispatch_outside_partition_is_a_contract_violation() {
    let p = params(8, 1, 0.3);
    let sizes = unit_sizes();
    let model = exp_slowdowns();
    let cfg = SimConfig::new(100.0, 0.0, 1);
    let mut driver: Box<dyn PolicyDriver> = Box::new(Outlaw { n: 8 });
    let mut sim = Sim::new(&p, &sizes, &model, &cfg, driver.as_ref()).unwrap();
    match sim.run(driver.as_mut(), None) {
        Err(Error::PolicyContract(msg)) => assert!(msg.contains("outside")),
        other => panic!("expected contract violation, got {other:?}"),
    }
}

#[test]
fn summarize_bundles_batch_means() {
    let p = params(16, 1, 0.4);
    let policy = crate::policies::build_baseline(&p);
    let cfg = SimConfig::new(2000.0, 100.0, 13);
    let res = run_simulation(&p, &unit_sizes(), &exp_slowdowns(), &policy, &cfg).unwrap();
    let s = crate::analytics::summarize(&res, 32).unwrap();
    assert_eq!(s.jobs, res.jobs.len());
    // exact accounting identity: mean(W) = mean(W^s) + mean(W^q)
    let gap = (s.delay.mean - s.service_time.mean - s.queueing_delay.mean).abs();
    assert!(gap < 1e-9, "accounting identity violated by {gap}");
    assert!(s.delay.ci_halfwidth > 0.0);
    // too few jobs is a structured error
    let starved = SimulationResult { jobs: res.jobs[..10].to_vec(), ..res };
    assert!(matches!(
        crate::analytics::summarize(&starved, 32),
        Err(Error::InsufficientData { .. })
    ));
}
