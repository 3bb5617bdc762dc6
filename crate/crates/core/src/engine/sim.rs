//! The event loop: stream lifecycle, FCFS pools and server switching.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{batch_confidence, BatchStats, RevenueLedger};
use crate::policies::{Admission, Controller, PolicyBundle, PolicyError};
use crate::stochastic::{substream_id, Distribution, Purpose, RngStream};

use super::calendar::{Calendar, Event};
use super::estimate::{DemandEstimator, EstimationMode};
use super::model::{Allocation, ClassError, ClusterState, IncomingStream, ServiceClass, StreamRecord};
use super::trace::{TraceKind, TraceRecord};

/// What happens to a busy server that is reassigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReallocationMode {
    /// The job in service finishes first, then the server switches.
    #[default]
    NonPreemptive,
    /// The job goes back to the head of its queue and restarts later.
    Preemptive,
}

/// Ordinals of preloaded streams live far above those of submissions.
const PRELOAD_ORDINAL_BASE: u64 = 1 << 47;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub servers: usize,
    pub classes: Vec<ServiceClass>,
    pub horizon: f64,
    pub batches: usize,
    pub seed: u64,
    pub estimation: EstimationMode,
    /// Weight of the newest window in measured mode.
    pub smoothing: f64,
    pub reallocation: ReallocationMode,
    /// Initial period excluded from the batches.
    pub warmup: f64,
    pub trace: bool,
    /// Streams admitted at time zero without consulting the policy.
    pub preloaded: Vec<IncomingStream>,
}

impl SimConfig {
    pub fn new(servers: usize, classes: Vec<ServiceClass>) -> Self {
        Self {
            servers,
            classes,
            horizon: 110_000.0,
            batches: 11,
            seed: 1,
            estimation: EstimationMode::Oracle,
            smoothing: 0.2,
            reallocation: ReallocationMode::NonPreemptive,
            warmup: 0.0,
            trace: false,
            preloaded: Vec::new(),
        }
    }

    pub fn validate(&self) -> Vec<SimError> {
        let mut errors = Vec::new();
        if self.classes.is_empty() {
            errors.push(SimError::NoClasses);
        }
        errors.extend(self.classes.iter().flat_map(|c| c.validate()).map(SimError::Class));
        if self.servers == 0 {
            errors.push(SimError::NoServers);
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            errors.push(SimError::Horizon(self.horizon));
        }
        if self.batches < 2 {
            errors.push(SimError::Batches(self.batches));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.horizon) {
            errors.push(SimError::Warmup(self.warmup));
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            errors.push(SimError::Smoothing(self.smoothing));
        }
        for (index, p) in self.preloaded.iter().enumerate() {
            let reason = if p.class >= self.classes.len() {
                Some("unknown class")
            } else if p.jobs == 0 {
                Some("jobs must be at least 1")
            } else if !(p.gamma.is_finite() && p.gamma > 0.0) {
                Some("gamma must be positive")
            } else {
                None
            };
            if let Some(reason) = reason {
                errors.push(SimError::Preloaded { index, reason });
            }
        }
        errors
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Class(#[from] ClassError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("no classes defined")]
    NoClasses,
    #[error("servers must be at least 1")]
    NoServers,
    #[error("horizon must be positive and finite, got {0}")]
    Horizon(f64),
    #[error("batches must be at least 2, got {0}")]
    Batches(usize),
    #[error("warm-up must lie in [0, horizon), got {0}")]
    Warmup(f64),
    #[error("smoothing factor must lie in (0, 1], got {0}")]
    Smoothing(f64),
    #[error("preloaded stream {index}: {reason}")]
    Preloaded { index: usize, reason: &'static str },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct InvalidConfig(pub Vec<SimError>);

/// Job waiting statistics of one class over one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WaitTally {
    pub served: u64,
    pub wait_sum: f64,
    /// Jobs that waited a positive time.
    pub delayed: u64,
}

impl WaitTally {
    pub fn mean_wait(&self) -> f64 {
        if self.served == 0 {
            0.0
        } else {
            self.wait_sum / self.served as f64
        }
    }

    pub fn delayed_fraction(&self) -> f64 {
        if self.served == 0 {
            0.0
        } else {
            self.delayed as f64 / self.served as f64
        }
    }

    fn merge(&mut self, other: &WaitTally) {
        self.served += other.served;
        self.wait_sum += other.wait_sum;
        self.delayed += other.delayed;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub policy: String,
    pub ledger: RevenueLedger,
    pub revenue: BatchStats,
    /// Indexed by batch, then class.
    pub waits: Vec<Vec<WaitTally>>,
    pub jobs_arrived: Vec<u64>,
    /// Streams still active at the horizon, excluded from revenue.
    pub in_flight: Vec<StreamRecord>,
    /// Servers are numbered pool by pool in this order at time zero.
    pub initial_allocation: Allocation,
    pub final_allocation: Allocation,
    pub events: u64,
    pub trace: Vec<TraceRecord>,
}

impl SimulationReport {
    pub fn active_at_horizon(&self, class: usize) -> usize {
        self.in_flight.iter().filter(|s| s.class == class).count()
    }

    /// Waiting statistics of one class over all batches.
    pub fn class_waits(&self, class: usize) -> WaitTally {
        let mut total = WaitTally::default();
        for batch in &self.waits {
            total.merge(&batch[class]);
        }
        total
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    stream: u64,
    class: usize,
    arrival: f64,
    service: f64,
}

#[derive(Debug, Clone, Copy)]
struct Busy {
    job: Job,
    start: f64,
}

#[derive(Debug, Clone)]
struct Server {
    class: usize,
    /// Class to join once the job in service completes.
    pending: Option<usize>,
    busy: Option<Busy>,
    generation: u64,
}

impl Server {
    fn committed(&self) -> usize {
        self.pending.unwrap_or(self.class)
    }
}

struct StreamSources {
    interarrival: Distribution,
    arrivals: RngStream,
    service: RngStream,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    controller: Controller,
    estimator: DemandEstimator,
    calendar: Calendar,
    now: f64,
    servers: Vec<Server>,
    queues: Vec<VecDeque<Job>>,
    streams: Vec<Vec<StreamRecord>>,
    sources: HashMap<u64, StreamSources>,
    submissions: Vec<RngStream>,
    submitted: Vec<u64>,
    next_stream_id: u64,
    allocation: Allocation,
    initial_allocation: Allocation,
    ledger: RevenueLedger,
    waits: Vec<Vec<WaitTally>>,
    jobs_arrived: Vec<u64>,
    events: u64,
    trace: Vec<TraceRecord>,
}

/// Simulates `cfg` under `bundle` up to the horizon.
pub fn run(cfg: &SimConfig, bundle: &PolicyBundle) -> Result<SimulationReport, InvalidConfig> {
    let mut errors = cfg.validate();
    if let Err(e) = bundle.validate() {
        errors.push(e.into());
    }
    if !errors.is_empty() {
        return Err(InvalidConfig(errors));
    }
    let mut sim = Sim::new(cfg, bundle);
    sim.start();
    while let Some(t) = sim.calendar.peek_time() {
        if t > cfg.horizon {
            break;
        }
        let (time, event) = sim.calendar.pop().expect("peeked");
        sim.now = time;
        sim.events += 1;
        sim.handle(event);
    }
    Ok(sim.finish(bundle))
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, bundle: &PolicyBundle) -> Self {
        let m = cfg.classes.len();
        Self {
            cfg,
            controller: bundle.controller(),
            estimator: DemandEstimator::new(cfg.estimation, cfg.smoothing, m),
            calendar: Calendar::new(),
            now: 0.0,
            servers: Vec::new(),
            queues: vec![VecDeque::new(); m],
            streams: vec![Vec::new(); m],
            sources: HashMap::new(),
            submissions: (0..m)
                .map(|i| RngStream::new(cfg.seed, substream_id(Purpose::StreamSubmissions, i, 0)))
                .collect(),
            submitted: vec![0; m],
            next_stream_id: 0,
            allocation: Allocation::zeros(m),
            initial_allocation: Allocation::zeros(m),
            ledger: RevenueLedger::new(m, cfg.horizon, cfg.batches, cfg.warmup),
            waits: vec![vec![WaitTally::default(); m]; cfg.batches],
            jobs_arrived: vec![0; m],
            events: 0,
            trace: Vec::new(),
        }
    }

    fn log(&mut self, kind: TraceKind, class: usize, stream: Option<u64>, server: Option<usize>, value: Option<f64>) {
        if self.cfg.trace {
            self.trace.push(TraceRecord {
                time: self.now,
                kind,
                class,
                stream,
                server,
                value,
            });
        }
    }

    fn start(&mut self) {
        for (i, p) in self.cfg.preloaded.iter().enumerate() {
            self.ledger.record_admission(0.0, p.class, true);
            self.log(TraceKind::Accept, p.class, Some(self.next_stream_id), None, None);
            self.admit(p, PRELOAD_ORDINAL_BASE + i as u64);
        }
        let demand = self.estimator.estimate(&self.cfg.classes, &self.streams, 0.0);
        let initial = {
            // only the total matters before any server exists
            let mut seed = vec![0; self.cfg.classes.len()];
            seed[0] = self.cfg.servers;
            let seed = Allocation::new(seed);
            let state = ClusterState {
                classes: &self.cfg.classes,
                demand: &demand,
                streams: &self.streams,
                allocation: &seed,
            };
            self.controller.initial_allocation(&state)
        };
        debug_assert_eq!(initial.total(), self.cfg.servers);
        for (class, &n) in initial.as_slice().iter().enumerate() {
            for _ in 0..n {
                self.servers.push(Server {
                    class,
                    pending: None,
                    busy: None,
                    generation: 0,
                });
            }
        }
        self.initial_allocation = initial.clone();
        self.allocation = initial;
        for class in 0..self.cfg.classes.len() {
            self.schedule_submission(class);
        }
    }

    fn schedule_submission(&mut self, class: usize) {
        let delta = self.cfg.classes[class].delta;
        if delta > 0.0 {
            let gap = self.submissions[class].sample(&Distribution::Exponential { rate: delta });
            self.calendar.schedule(self.now + gap, Event::StreamSubmission { class });
        }
    }

    fn admit(&mut self, incoming: &IncomingStream, ordinal: u64) {
        let class = &self.cfg.classes[incoming.class];
        let id = self.next_stream_id;
        self.next_stream_id += 1;
        self.streams[incoming.class].push(StreamRecord::new(id, incoming.class, incoming.jobs, incoming.gamma, self.now));
        let interarrival = if incoming.gamma == class.gamma {
            class.interarrival
        } else {
            class.interarrival.with_mean(1.0 / incoming.gamma)
        };
        let seed = self.cfg.seed;
        let mut sources = StreamSources {
            interarrival,
            arrivals: RngStream::new(seed, substream_id(Purpose::JobInterarrivals, incoming.class, ordinal)),
            service: RngStream::new(seed, substream_id(Purpose::ServiceTimes, incoming.class, ordinal)),
        };
        let first = self.now + sources.arrivals.sample(&sources.interarrival);
        self.sources.insert(id, sources);
        self.calendar.schedule(
            first,
            Event::JobArrival {
                class: incoming.class,
                stream: id,
            },
        );
    }

    fn handle(&mut self, event: Event) {
        match event {
            Event::StreamSubmission { class } => self.on_submission(class),
            Event::JobArrival { class, stream } => self.on_job_arrival(class, stream),
            Event::ServiceCompletion { server, generation } => self.on_service_completion(server, generation),
        }
    }

    fn on_submission(&mut self, class: usize) {
        let ordinal = self.submitted[class];
        self.submitted[class] += 1;
        self.schedule_submission(class);
        self.estimator.observe_submission(class);
        let c = &self.cfg.classes[class];
        let incoming = IncomingStream {
            class,
            jobs: c.jobs,
            gamma: c.gamma,
        };
        let demand = self.estimator.estimate(&self.cfg.classes, &self.streams, self.now);
        let state = ClusterState {
            classes: &self.cfg.classes,
            demand: &demand,
            streams: &self.streams,
            allocation: &self.allocation,
        };
        match self.controller.on_submission(&state, &incoming) {
            Admission::Accept(target) => {
                self.ledger.record_admission(self.now, class, true);
                self.log(TraceKind::Accept, class, Some(self.next_stream_id), None, None);
                self.admit(&incoming, ordinal);
                if let Some(target) = target {
                    self.apply_allocation(&target);
                }
            }
            Admission::Reject => {
                self.ledger.record_admission(self.now, class, false);
                self.log(TraceKind::Reject, class, None, None, None);
                if let Some(target) = self.controller.take_pending() {
                    self.apply_allocation(&target);
                }
            }
        }
    }

    fn on_job_arrival(&mut self, class: usize, stream: u64) {
        let sources = self.sources.get_mut(&stream).expect("arrival of an active stream");
        let service = sources.service.sample(&self.cfg.classes[class].service);
        let record = self.streams[class]
            .iter_mut()
            .find(|s| s.id == stream)
            .expect("arrival of an active stream");
        record.arrived += 1;
        if record.arrived < record.jobs {
            let next = self.now + sources.arrivals.sample(&sources.interarrival);
            self.calendar.schedule(next, Event::JobArrival { class, stream });
        }
        self.jobs_arrived[class] += 1;
        self.estimator.observe_arrival(class, self.now);
        self.queues[class].push_back(Job {
            stream,
            class,
            arrival: self.now,
            service,
        });
        self.log(TraceKind::Arrive, class, Some(stream), None, None);
        self.dispatch(class);
    }

    fn on_service_completion(&mut self, server: usize, generation: u64) {
        let s = &mut self.servers[server];
        if s.generation != generation || s.busy.is_none() {
            return;
        }
        let Busy { job, start } = s.busy.take().expect("checked");
        let wait = start - job.arrival;
        if let Some(next) = s.pending.take() {
            s.class = next;
            self.log(TraceKind::Switch, job.class, None, Some(server), Some(next as f64));
        }
        self.log(TraceKind::Complete, job.class, Some(job.stream), Some(server), Some(wait));
        self.estimator.observe_service(job.class, job.service);
        if let Some(b) = self.ledger.batch_index(self.now) {
            let tally = &mut self.waits[b][job.class];
            tally.served += 1;
            tally.wait_sum += wait;
            tally.delayed += u64::from(wait > 0.0);
        }

        let streams = &mut self.streams[job.class];
        let pos = streams.iter().position(|r| r.id == job.stream).expect("job of an active stream");
        streams[pos].record_completion(wait);
        if streams[pos].is_complete() {
            let record = streams.remove(pos);
            let now_empty = streams.is_empty();
            self.sources.remove(&record.id);
            let net = self.ledger.record_completion(self.now, &record, &self.cfg.classes[job.class]);
            self.log(TraceKind::StreamDone, job.class, Some(record.id), None, Some(net));
            if now_empty {
                self.estimator.observe_idle(job.class);
            }
            let demand = self.estimator.estimate(&self.cfg.classes, &self.streams, self.now);
            let state = ClusterState {
                classes: &self.cfg.classes,
                demand: &demand,
                streams: &self.streams,
                allocation: &self.allocation,
            };
            if let Some(target) = self.controller.on_completion(&state, job.class) {
                self.apply_allocation(&target);
            }
        }
        let class = self.servers[server].class;
        self.dispatch(class);
    }

    /// Starts queued jobs of `class` on its idle servers.
    fn dispatch(&mut self, class: usize) {
        for idx in 0..self.servers.len() {
            if self.queues[class].is_empty() {
                return;
            }
            let s = &self.servers[idx];
            if s.class == class && s.busy.is_none() {
                let job = self.queues[class].pop_front().expect("non-empty");
                self.begin_service(idx, job);
            }
        }
    }

    fn begin_service(&mut self, idx: usize, job: Job) {
        let s = &mut self.servers[idx];
        debug_assert!(s.pending.is_none());
        s.generation += 1;
        s.busy = Some(Busy { job, start: self.now });
        let generation = s.generation;
        self.calendar.schedule(
            self.now + job.service,
            Event::ServiceCompletion {
                server: idx,
                generation,
            },
        );
        self.log(TraceKind::Start, job.class, Some(job.stream), Some(idx), Some(self.now - job.arrival));
    }

    /// Moves servers until every class is committed to its target count.
    ///
    /// Donors are servers still heading to the donor class first, then idle
    /// ones, then busy ones.
    fn apply_allocation(&mut self, target: &Allocation) {
        debug_assert_eq!(target.total(), self.servers.len());
        if *target == self.allocation {
            return;
        }
        let m = self.cfg.classes.len();
        let mut committed = vec![0usize; m];
        for s in &self.servers {
            committed[s.committed()] += 1;
        }
        let mut surplus: Vec<isize> = (0..m).map(|i| committed[i] as isize - target.get(i) as isize).collect();
        let mut touched = Vec::new();
        for to in 0..m {
            while surplus[to] < 0 {
                let from = (0..m).find(|&i| surplus[i] > 0).expect("allocations have equal totals");
                let idx = self.pick_donor(from);
                self.reassign(idx, to);
                surplus[from] -= 1;
                surplus[to] += 1;
                touched.push(to);
            }
        }
        self.allocation = target.clone();
        touched.dedup();
        for class in touched {
            self.dispatch(class);
        }
    }

    fn pick_donor(&self, from: usize) -> usize {
        let find = |pred: &dyn Fn(&Server) -> bool| self.servers.iter().position(pred);
        find(&|s| s.pending == Some(from))
            .or_else(|| find(&|s| s.class == from && s.pending.is_none() && s.busy.is_none()))
            .or_else(|| find(&|s| s.class == from && s.pending.is_none()))
            .expect("surplus class has a committed server")
    }

    fn reassign(&mut self, idx: usize, to: usize) {
        let preemptive = self.cfg.reallocation == ReallocationMode::Preemptive;
        let s = &mut self.servers[idx];
        match (s.busy, s.pending) {
            (None, _) => {
                let from = s.class;
                s.class = to;
                self.log(TraceKind::Switch, from, None, Some(idx), Some(to as f64));
            }
            (Some(_), Some(_)) => {
                s.pending = (s.class != to).then_some(to);
            }
            (Some(busy), None) if preemptive => {
                let from = s.class;
                s.busy = None;
                s.generation += 1;
                s.class = to;
                let job = busy.job;
                let queue = &mut self.queues[job.class];
                let at = queue.iter().position(|q| q.arrival > job.arrival).unwrap_or(queue.len());
                queue.insert(at, job);
                self.log(TraceKind::Preempt, from, Some(job.stream), Some(idx), None);
                self.log(TraceKind::Switch, from, None, Some(idx), Some(to as f64));
                self.dispatch(from);
            }
            (Some(_), None) => {
                s.pending = Some(to);
            }
        }
    }

    fn finish(self, bundle: &PolicyBundle) -> SimulationReport {
        let revenue = batch_confidence(&self.ledger.batch_rates(), self.ledger.batch_length())
            .expect("batch count validated");
        SimulationReport {
            policy: bundle.to_string(),
            ledger: self.ledger,
            revenue,
            waits: self.waits,
            jobs_arrived: self.jobs_arrived,
            in_flight: self.streams.into_iter().flatten().collect(),
            initial_allocation: self.initial_allocation,
            final_allocation: self.allocation,
            events: self.events,
            trace: self.trace,
        }
    }

    #[cfg(test)]
    fn pool_sizes(&self) -> Vec<usize> {
        let mut n = vec![0; self.cfg.classes.len()];
        for s in &self.servers {
            n[s.class] += 1;
        }
        n
    }
}
