//! Deterministic discrete-event simulation core: Poisson arrivals, FIFO
//! servers, replica lifecycle with any-k-of-r completion and cancellation,
//! and per-job delay decomposition.

mod event;
mod result;

#[cfg(test)]
mod tests;

pub use event::{format_trace, EventKind, EventRecord};
pub use result::{JobMetrics, SimulationResult};

use crate::model::{sample_slowdown, streams, RngHandle, SlowdownModel, SystemParams, TaskSizeDistribution};
use crate::policies::{Action, IdleTracker, PolicyCtx, PolicyDriver, PolicyInstance, ServerId};
use crate::{Error, Result};
use event::{HeapEvent, Pending};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::ops::Range;
use std::time::Instant;

pub type JobId = u64;
type ReplicaId = u64;

/// Run-level knobs. `horizon` and `warmup` are in simulated time units.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    /// Jobs arriving within this margin of the horizon are excluded from
    /// metrics; defaults to five mean replica service times.
    pub drain_margin: Option<f64>,
    /// Abort the run once this many jobs are live; defaults to `100 * n`.
    pub explosion_threshold: Option<u64>,
    /// Number of uniformly spaced live-job-count samples to record.
    pub live_sample_points: usize,
    pub collect_trace: bool,
}

impl SimConfig {
    pub fn new(horizon: f64, warmup: f64, seed: u64) -> Self {
        Self {
            horizon,
            warmup,
            seed,
            drain_margin: None,
            explosion_threshold: None,
            live_sample_points: 512,
            collect_trace: false,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.collect_trace = true;
        self
    }
}

/// Read-only view of the simulation state passed to test observers.
pub trait SimProbe {
    fn now(&self) -> f64;
    fn live_jobs(&self) -> u64;
    fn busy_in_range(&self, range: Range<ServerId>) -> usize;
    fn job_in_service_count(&self, job: JobId) -> Option<u32>;
}

/// Test hook invoked after every processed event.
pub trait Observer {
    fn after_event(&mut self, event: &EventRecord, probe: &dyn SimProbe);
}

/// Run one simulation. Deterministic: identical inputs and seed produce
/// bit-identical results, including the event trace.
pub fn run_simulation(
    params: &SystemParams,
    sizes: &TaskSizeDistribution,
    slowdowns: &SlowdownModel,
    policy: &PolicyInstance,
    cfg: &SimConfig,
) -> Result<SimulationResult> {
    run_simulation_observed(params, sizes, slowdowns, policy, cfg, None)
}

/// [`run_simulation`] with a test observer.
pub fn run_simulation_observed(
    params: &SystemParams,
    sizes: &TaskSizeDistribution,
    slowdowns: &SlowdownModel,
    policy: &PolicyInstance,
    cfg: &SimConfig,
    observer: Option<&mut dyn Observer>,
) -> Result<SimulationResult> {
    if !(cfg.horizon > cfg.warmup) || !(cfg.warmup >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "need horizon > warmup >= 0, got horizon={} warmup={}",
            cfg.horizon, cfg.warmup
        )));
    }
    let started = Instant::now();
    let mut driver = policy.driver();
    let mut sim = Sim::new(params, sizes, slowdowns, cfg, driver.as_ref())?;
    sim.run(driver.as_mut(), observer)?;
    Ok(sim.finish(driver.as_ref(), started))
}

struct Job {
    arrival: f64,
    x: f64,
    subsystem: u32,
    completions: u32,
    replicas_started: u32,
    live_replicas: Vec<ReplicaId>,
    in_service_count: u32,
    service_clock: f64,
    last_transition: f64,
    rng: ChaCha8Rng,
}

impl Job {
    /// Extend the service clock over `(last_transition, now)` iff at least
    /// one replica was in service; call before every in-service-count
    /// transition.
    fn accrue(&mut self, now: f64) {
        if self.in_service_count > 0 {
            self.service_clock += now - self.last_transition;
        }
        self.last_transition = now;
    }
}

enum ReplicaState {
    Queued,
    InService { start: f64 },
}

struct Replica {
    job: JobId,
    server: ServerId,
    state: ReplicaState,
}

struct Server {
    in_service: Option<ReplicaId>,
    fifo: VecDeque<ReplicaId>,
    busy_time: f64,
    busy_since: f64,
}

struct Sim<'a> {
    params: &'a SystemParams,
    sizes: &'a TaskSizeDistribution,
    slowdowns: &'a SlowdownModel,
    seed: u64,
    horizon: f64,
    warmup: f64,
    metrics_cutoff: f64,
    threshold: u64,

    servers: Vec<Server>,
    jobs: HashMap<JobId, Job>,
    replicas: HashMap<ReplicaId, Replica>,
    tracker: IdleTracker,
    heap: BinaryHeap<HeapEvent>,

    arrival_rng: ChaCha8Rng,
    size_rng: ChaCha8Rng,
    routing_rng: ChaCha8Rng,
    dispatch_rng: ChaCha8Rng,

    now: f64,
    seq: u64,
    next_job_id: JobId,
    next_replica_id: ReplicaId,
    live_jobs: u64,
    busy_count: u32,
    arrived: u64,
    arrived_in_window: u64,
    departed: u64,
    event_count: u64,

    last_integral_t: f64,
    live_integral: f64,
    busy_integral: f64,
    replica_service_total: f64,

    sample_dt: f64,
    next_sample_t: f64,
    max_samples: usize,
    live_samples: Vec<(f64, f64)>,

    metrics: Vec<JobMetrics>,
    actions: Vec<Action>,
    started_queue: VecDeque<(JobId, ServerId)>,
    idled_this_event: bool,
    trace: Option<Vec<EventRecord>>,
    abort: Option<String>,
}

impl<'a> Sim<'a> {
    fn new(
        params: &'a SystemParams,
        sizes: &'a TaskSizeDistribution,
        slowdowns: &'a SlowdownModel,
        cfg: &'a SimConfig,
        driver: &dyn PolicyDriver,
    ) -> Result<Self> {
        let n = params.n();
        let tracker = IdleTracker::new(n, driver.pools())?;
        let drain = cfg
            .drain_margin
            .unwrap_or_else(|| 5.0 * sizes.mean() * (1.0 + 1.0 / slowdowns.mu()));
        let sample_points = cfg.live_sample_points.max(1);
        let sample_dt = cfg.horizon / sample_points as f64;
        Ok(Self {
            params,
            sizes,
            slowdowns,
            seed: cfg.seed,
            horizon: cfg.horizon,
            warmup: cfg.warmup,
            metrics_cutoff: cfg.horizon - drain,
            threshold: cfg.explosion_threshold.unwrap_or(100 * n as u64),
            servers: (0..n)
                .map(|_| Server { in_service: None, fifo: VecDeque::new(), busy_time: 0.0, busy_since: 0.0 })
                .collect(),
            jobs: HashMap::new(),
            replicas: HashMap::new(),
            tracker,
            heap: BinaryHeap::new(),
            arrival_rng: RngHandle::new(cfg.seed, streams::ARRIVALS).rng(),
            size_rng: RngHandle::new(cfg.seed, streams::TASK_SIZES).rng(),
            routing_rng: RngHandle::new(cfg.seed, streams::ROUTING).rng(),
            dispatch_rng: RngHandle::new(cfg.seed, streams::DISPATCH).rng(),
            now: 0.0,
            seq: 0,
            next_job_id: 0,
            next_replica_id: 0,
            live_jobs: 0,
            busy_count: 0,
            arrived: 0,
            arrived_in_window: 0,
            departed: 0,
            event_count: 0,
            last_integral_t: 0.0,
            live_integral: 0.0,
            busy_integral: 0.0,
            replica_service_total: 0.0,
            sample_dt,
            next_sample_t: sample_dt,
            max_samples: sample_points,
            live_samples: Vec::with_capacity(sample_points),
            metrics: Vec::new(),
            actions: Vec::new(),
            started_queue: VecDeque::new(),
            idled_this_event: false,
            trace: cfg.collect_trace.then(Vec::new),
            abort: None,
        })
    }

    fn next_seq(&mut self) -> u64 {
        let s = self.seq;
        self.seq += 1;
        s
    }

    fn schedule(&mut self, time: f64, what: Pending) {
        let seq = self.next_seq();
        self.heap.push(HeapEvent { time, seq, what });
    }

    fn advance(&mut self, t: f64) {
        let from = self.last_integral_t;
        if t > from {
            while self.next_sample_t < t && self.live_samples.len() < self.max_samples {
                self.live_samples.push((self.next_sample_t, self.live_jobs as f64));
                self.next_sample_t += self.sample_dt;
            }
            let lo = from.max(self.warmup);
            if t > lo {
                let dt = t - lo;
                self.live_integral += self.live_jobs as f64 * dt;
                self.busy_integral += self.busy_count as f64 * dt;
            }
        }
        self.last_integral_t = t.max(from);
        self.now = self.now.max(t);
    }

    fn record(&mut self, ev: EventRecord) -> EventRecord {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(ev.clone());
        }
        ev
    }

    fn run(&mut self, policy: &mut dyn PolicyDriver, mut observer: Option<&mut dyn Observer>) -> Result<()> {
        let first = self.draw_interarrival();
        if first <= self.horizon {
            self.schedule(first, Pending::Arrival);
        }
        while let Some(ev) = self.heap.pop() {
            if ev.time > self.horizon {
                break;
            }
            let record = match ev.what {
                Pending::Arrival => {
                    self.advance(ev.time);
                    self.handle_arrival(ev.seq, policy)?
                }
                Pending::Completion { server, replica } => {
                    if !self.completion_is_live(server, replica) {
                        continue;
                    }
                    self.advance(ev.time);
                    self.handle_completion(ev.seq, server, replica, policy)?
                }
            };
            self.event_count += 1;
            if let Some(obs) = observer.as_deref_mut() {
                obs.after_event(&record, self);
            }
            if self.abort.is_some() {
                break;
            }
        }
        let end = if self.abort.is_some() { self.now } else { self.horizon };
        self.advance(end);
        policy.on_end(end);
        Ok(())
    }

    fn draw_interarrival(&mut self) -> f64 {
        let rate = self.params.job_arrival_rate();
        self.now + rand_distr::Exp::new(rate).unwrap().sample(&mut self.arrival_rng)
    }

    fn handle_arrival(&mut self, seq: u64, policy: &mut dyn PolicyDriver) -> Result<EventRecord> {
        let job_id = self.next_job_id;
        self.next_job_id += 1;
        let x = self.sizes.sample(&mut self.size_rng);
        let job = Job {
            arrival: self.now,
            x,
            subsystem: 0,
            completions: 0,
            replicas_started: 0,
            live_replicas: Vec::new(),
            in_service_count: 0,
            service_clock: 0.0,
            last_transition: self.now,
            rng: RngHandle::new(self.seed, streams::JOB_SLOWDOWNS + job_id).rng(),
        };
        self.jobs.insert(job_id, job);
        self.live_jobs += 1;
        self.arrived += 1;
        if self.now > self.warmup {
            self.arrived_in_window += 1;
        }
        let record = self.record(EventRecord {
            time: self.now,
            sequence: seq,
            kind: EventKind::JobArrival { job: job_id },
        });

        if self.live_jobs > self.threshold {
            self.abort = Some(format!(
                "instability suspected: {} live jobs exceeds threshold {} at t={}",
                self.live_jobs, self.threshold, self.now
            ));
            return Ok(record);
        }

        policy.on_arrival(
            job_id,
            x,
            &mut PolicyCtx::new(
                self.now,
                &self.tracker,
                &mut self.routing_rng,
                &mut self.dispatch_rng,
                &mut self.actions,
            ),
        );
        self.drive(policy)?;
        self.finish_event(policy)?;

        let t = self.draw_interarrival();
        if t <= self.horizon {
            self.schedule(t, Pending::Arrival);
        }
        Ok(record)
    }

    fn completion_is_live(&self, server: ServerId, replica: ReplicaId) -> bool {
        self.servers[server as usize].in_service == Some(replica)
    }

    fn handle_completion(
        &mut self,
        seq: u64,
        server_id: ServerId,
        replica_id: ReplicaId,
        policy: &mut dyn PolicyDriver,
    ) -> Result<EventRecord> {
        let rep = self
            .replicas
            .remove(&replica_id)
            .ok_or_else(|| Error::PolicyContract(format!("completion for unknown replica {replica_id}")))?;
        let ReplicaState::InService { start } = rep.state else {
            return Err(Error::PolicyContract(format!("completion for queued replica {replica_id}")));
        };
        let job_id = rep.job;
        self.release_server(server_id, start);
        let mut freed = vec![server_id];

        let job = self.jobs.get_mut(&job_id).expect("completing replica belongs to a live job");
        job.accrue(self.now);
        job.in_service_count -= 1;
        job.completions += 1;
        job.live_replicas.retain(|&r| r != replica_id);
        let done = job.completions == self.params.k();

        let record = self.record(EventRecord {
            time: self.now,
            sequence: seq,
            kind: EventKind::ServiceCompletion { server: server_id, job: job_id },
        });

        if done {
            self.depart(job_id, &mut freed);
            policy.on_job_departed(job_id);
        }

        for s in freed {
            self.pull_next(s);
        }
        self.drive(policy)?;
        self.finish_event(policy)?;
        Ok(record)
    }

    fn release_server(&mut self, server_id: ServerId, busy_since: f64) {
        let server = &mut self.servers[server_id as usize];
        debug_assert!(server.in_service.is_some());
        server.in_service = None;
        let dt = self.now - busy_since;
        server.busy_time += dt;
        self.replica_service_total += dt;
        self.busy_count -= 1;
    }

    fn depart(&mut self, job_id: JobId, freed: &mut Vec<ServerId>) {
        let mut job = self.jobs.remove(&job_id).expect("departing job is live");
        let w = self.now - job.arrival;
        let ws_clock = job.service_clock;
        let wq = (w - ws_clock).max(0.0);
        let ws = w - wq;
        debug_assert!((ws - ws_clock).abs() <= 1e-9 * (1.0 + w.abs()));
        if job.arrival > self.warmup && job.arrival <= self.metrics_cutoff {
            self.metrics.push(JobMetrics {
                job_id,
                arrival_time: job.arrival,
                task_size: job.x,
                subsystem: job.subsystem,
                replicas_started: job.replicas_started,
                delay: w,
                service_time: ws,
                queueing_delay: wq,
            });
        }
        self.departed += 1;
        self.live_jobs -= 1;

        // remove all remaining replicas: queued ones vanish from their FIFOs
        // lazily, in-service siblings free their servers right now
        for rid in std::mem::take(&mut job.live_replicas) {
            let rep = self.replicas.remove(&rid).expect("live replica exists");
            if let ReplicaState::InService { start } = rep.state {
                self.release_server(rep.server, start);
                freed.push(rep.server);
            }
        }
    }

    /// Start the next live queued replica on a freed server, or mark it
    /// idle. A server is never left with an empty service slot and a
    /// nonempty FIFO past this point.
    fn pull_next(&mut self, server_id: ServerId) {
        loop {
            let server = &mut self.servers[server_id as usize];
            debug_assert!(server.in_service.is_none());
            match server.fifo.pop_front() {
                None => {
                    self.tracker.set_idle(server_id);
                    self.idled_this_event = true;
                    return;
                }
                Some(rid) => {
                    if self.replicas.contains_key(&rid) {
                        self.start_replica(server_id, rid);
                        return;
                    }
                    // cancelled while queued; skip
                }
            }
        }
    }

    fn start_replica(&mut self, server_id: ServerId, replica_id: ReplicaId) {
        let rep = self.replicas.get_mut(&replica_id).expect("starting a live replica");
        debug_assert!(matches!(rep.state, ReplicaState::Queued));
        rep.state = ReplicaState::InService { start: self.now };
        let job_id = rep.job;
        let job = self.jobs.get_mut(&job_id).expect("queued replica belongs to a live job");
        job.accrue(self.now);
        job.in_service_count += 1;
        job.replicas_started += 1;
        debug_assert!(job.replicas_started <= self.params.n() + self.params.k() - 1);
        let slowdown = sample_slowdown(self.slowdowns, job.x, &mut job.rng);
        let duration = job.x * (1.0 + slowdown);
        debug_assert!(duration >= 0.0);
        let server = &mut self.servers[server_id as usize];
        server.in_service = Some(replica_id);
        server.busy_since = self.now;
        self.busy_count += 1;
        self.tracker.set_busy(server_id);
        let t = self.now + duration;
        self.schedule(t, Pending::Completion { server: server_id, replica: replica_id });
        self.started_queue.push_back((job_id, server_id));
    }

    fn create_replica(&mut self, job_id: JobId, server_id: ServerId) -> ReplicaId {
        let rid = self.next_replica_id;
        self.next_replica_id += 1;
        self.replicas.insert(rid, Replica { job: job_id, server: server_id, state: ReplicaState::Queued });
        self.jobs
            .get_mut(&job_id)
            .expect("dispatching replicas for a live job")
            .live_replicas
            .push(rid);
        rid
    }

    /// Apply pending policy actions and deliver service-start notifications
    /// until both queues drain.
    fn drive(&mut self, policy: &mut dyn PolicyDriver) -> Result<()> {
        loop {
            let acts = std::mem::take(&mut self.actions);
            for a in acts {
                self.apply_action(a, policy)?;
            }
            match self.started_queue.pop_front() {
                None => {
                    if self.actions.is_empty() {
                        return Ok(());
                    }
                }
                Some((job, server)) => {
                    policy.on_service_start(
                        job,
                        server,
                        &mut PolicyCtx::new(
                            self.now,
                            &self.tracker,
                            &mut self.routing_rng,
                            &mut self.dispatch_rng,
                            &mut self.actions,
                        ),
                    );
                }
            }
        }
    }

    /// One idle notification per event, after all starts settle.
    fn finish_event(&mut self, policy: &mut dyn PolicyDriver) -> Result<()> {
        if self.idled_this_event {
            self.idled_this_event = false;
            policy.on_servers_idle(&mut PolicyCtx::new(
                self.now,
                &self.tracker,
                &mut self.routing_rng,
                &mut self.dispatch_rng,
                &mut self.actions,
            ));
            self.drive(policy)?;
        }
        Ok(())
    }

    fn check_dispatch(&self, job_id: JobId, server_id: ServerId, policy: &dyn PolicyDriver) -> Result<()> {
        let job = self
            .jobs
            .get(&job_id)
            .ok_or_else(|| Error::PolicyContract(format!("dispatch for unknown job {job_id}")))?;
        let allowed = policy.allowed_range(job.subsystem);
        if !allowed.contains(&server_id) {
            return Err(Error::PolicyContract(format!(
                "job {job_id} (subsystem {}) dispatched to server {server_id} outside {allowed:?}",
                job.subsystem
            )));
        }
        Ok(())
    }

    fn apply_action(&mut self, action: Action, policy: &mut dyn PolicyDriver) -> Result<()> {
        match action {
            Action::Assign { job, subsystem } => {
                if let Some(j) = self.jobs.get_mut(&job) {
                    j.subsystem = subsystem;
                }
            }
            Action::StartBatch { job, servers } => {
                for s in servers {
                    self.check_dispatch(job, s, policy)?;
                    let server = &self.servers[s as usize];
                    if server.in_service.is_some() {
                        return Err(Error::PolicyContract(format!(
                            "batch start on busy server {s} for job {job}"
                        )));
                    }
                    let rid = self.create_replica(job, s);
                    self.start_replica(s, rid);
                }
            }
            Action::Enqueue { job, servers } => {
                for s in servers {
                    self.check_dispatch(job, s, policy)?;
                    let rid = self.create_replica(job, s);
                    if self.servers[s as usize].in_service.is_none() {
                        self.start_replica(s, rid);
                    } else {
                        self.servers[s as usize].fifo.push_back(rid);
                    }
                }
            }
            Action::CancelQueued { job } => {
                if let Some(j) = self.jobs.get_mut(&job) {
                    let mut kept = Vec::with_capacity(j.live_replicas.len());
                    for rid in j.live_replicas.drain(..) {
                        match self.replicas.get(&rid) {
                            Some(rep) if matches!(rep.state, ReplicaState::Queued) => {
                                self.replicas.remove(&rid);
                            }
                            _ => kept.push(rid),
                        }
                    }
                    j.live_replicas = kept;
                }
            }
            Action::Wake { queue, job } => {
                let seq = self.next_seq();
                self.record(EventRecord {
                    time: self.now,
                    sequence: seq,
                    kind: EventKind::DispatcherWake { queue, job },
                });
                self.event_count += 1;
            }
        }
        Ok(())
    }

    fn finish(mut self, driver: &dyn PolicyDriver, started: Instant) -> SimulationResult {
        let end = if self.abort.is_some() { self.now } else { self.horizon };
        let duration = (end - self.warmup).max(f64::MIN_POSITIVE);
        self.metrics
            .sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time).then(a.job_id.cmp(&b.job_id)));
        let busy_time_total: f64 = self.servers.iter().map(|s| s.busy_time).sum();
        SimulationResult {
            jobs: self.metrics,
            arrived: self.arrived,
            departed: self.departed,
            censored: self.live_jobs,
            event_count: self.event_count,
            time_avg_busy_servers: self.busy_integral / duration,
            time_avg_live_jobs: self.live_integral / duration,
            effective_arrival_rate: self.arrived_in_window as f64 / duration,
            busy_time_total,
            replica_service_total: self.replica_service_total,
            live_samples: self.live_samples,
            aborted: self.abort,
            end_time: end,
            warmup: self.warmup,
            wall_seconds: started.elapsed().as_secs_f64(),
            policy_stats: driver.stats(),
            trace: self.trace,
        }
    }
}

impl SimProbe for Sim<'_> {
    fn now(&self) -> f64 {
        self.now
    }

    fn live_jobs(&self) -> u64 {
        self.live_jobs
    }

    fn busy_in_range(&self, range: Range<ServerId>) -> usize {
        self.servers[range.start as usize..range.end as usize]
            .iter()
            .filter(|s| s.in_service.is_some())
            .count()
    }

    fn job_in_service_count(&self, job: JobId) -> Option<u32> {
        self.jobs.get(&job).map(|j| j.in_service_count)
    }
}
