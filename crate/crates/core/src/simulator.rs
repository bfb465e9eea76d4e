//! Tick-driven queueing simulation. One message arrives per tick at a source
//! picked round-robin; workers serve their FIFO queues at a rate proportional
//! to their capacity; acknowledgments carry delegation signals back to the
//! sources.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::aggregation::{Aggregator, PartialCounts};
use crate::cg::{
    classify_worker, emit_signal, DelegationConfig, MigrationRecord, PairingState, SourceView,
    VirtualWorkerTable, WorkerClass,
};
use crate::error::{Error, Result};
use crate::hashing::HashSeed;
use crate::metrics::{LatencySummary, MetricsSeries, Sample};
use crate::partitioners::{
    build, validate_epsilon, MemoryTracker, Partitioner, PartitionerParams, RouteRecord, Strategy,
};
use crate::types::{CapacityProfile, Key, Message, Signal, WorkloadSpec};
use crate::workload::{generate_stream, CapacitySchedule};

/// How a worker measures its own utilization at a monitoring step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
#[derive(Default)]
pub enum UtilizationMode {
    /// Messages assigned in the last time slot over what the worker could serve.
    #[default]
    Arrivals,
    /// Current queue length over `reference × c_w × n`.
    QueueLength { reference: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub strategy: Strategy,
    pub epsilon: f64,
    /// Virtual workers per worker (cg only).
    pub alpha: usize,
    pub delegation: DelegationConfig,
    /// Hash seed for routing.
    pub seed: u64,
    pub sources: usize,
    pub capacities: CapacitySchedule,
    pub workload: WorkloadSpec,
    /// Target system utilization: total service rate is `1 / rho` messages per tick.
    pub rho: f64,
    pub sample_interval: u64,
    /// Routed messages between aggregation rounds; 0 means `m / 20`.
    pub aggregation_interval: u64,
    pub utilization: UtilizationMode,
    /// Keep a per-message routing record.
    pub record_routes: bool,
}

impl SimConfig {
    pub fn new(strategy: Strategy, capacities: CapacitySchedule, workload: WorkloadSpec) -> Self {
        SimConfig {
            strategy,
            epsilon: 0.01,
            alpha: 10,
            delegation: DelegationConfig::default(),
            seed: 0,
            sources: 1,
            capacities,
            workload,
            rho: 0.8,
            sample_interval: 1000,
            aggregation_interval: 0,
            utilization: UtilizationMode::Arrivals,
            record_routes: false,
        }
    }

    pub fn workers(&self) -> usize {
        self.capacities.workers()
    }

    pub fn validate(&self) -> Result<()> {
        self.capacities.validate()?;
        self.workload.validate()?;
        self.delegation.validate()?;
        validate_epsilon(self.epsilon)?;
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::validation(
                "rho",
                format!("must lie in (0, 1), got {}", self.rho),
            ));
        }
        if self.sources == 0 {
            return Err(Error::validation("sources", "must be at least 1"));
        }
        if self.sample_interval == 0 {
            return Err(Error::validation(
                "sample_interval",
                "must be at least 1 tick",
            ));
        }
        if self.alpha == 0 {
            return Err(Error::validation("alpha", "must be at least 1"));
        }
        if let UtilizationMode::QueueLength { reference } = self.utilization {
            if !(reference.is_finite() && reference > 0.0) {
                return Err(Error::validation(
                    "utilization.reference",
                    "must be positive",
                ));
            }
        }
        if matches!(self.strategy, Strategy::Pkg | Strategy::Potc) && self.workers() < 2 {
            return Err(Error::validation(
                "n",
                "pkg and potc need at least 2 workers",
            ));
        }
        Ok(())
    }
}

/// Utilization from arrivals: assigned messages over `rate × window`.
pub fn utilization(assigned: u64, rate: f64, window: u64) -> f64 {
    assigned as f64 / (rate * window.max(1) as f64)
}

/// A worker's FIFO queue and fluid server.
#[derive(Clone, Debug)]
pub struct WorkerRuntime {
    pub id: usize,
    rate: f64,
    /// `(stream index, arrival tick)`
    queue: VecDeque<(usize, u64)>,
    accumulator: f64,
    served: u64,
}

impl WorkerRuntime {
    pub fn new(id: usize, rate: f64) -> Self {
        WorkerRuntime {
            id,
            rate,
            queue: VecDeque::new(),
            accumulator: 0.0,
            served: 0,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn set_rate(&mut self, rate: f64) {
        self.rate = rate;
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn accumulator(&self) -> f64 {
        self.accumulator
    }

    pub fn served(&self) -> u64 {
        self.served
    }

    pub fn enqueue(&mut self, index: usize, tick: u64) {
        self.queue.push_back((index, tick));
    }

    /// One tick of service; completed `(stream index, arrival tick)` pairs are
    /// appended to `done`. Idle capacity does not carry over.
    pub fn serve(&mut self, done: &mut Vec<(usize, u64)>) {
        self.accumulator += self.rate;
        while self.accumulator >= 1.0 {
            match self.queue.pop_front() {
                Some(item) => {
                    self.accumulator -= 1.0;
                    self.served += 1;
                    done.push(item);
                }
                None => break,
            }
        }
        if self.queue.is_empty() {
            self.accumulator = self.accumulator.fract();
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AckEvent {
    pub message_id: u64,
    pub worker: usize,
    pub source: usize,
    pub finish_tick: u64,
    pub signals: Vec<Signal>,
}

/// A signal as it was issued, with the issuing worker's share of the
/// canonical table at that moment.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalRecord {
    pub signal: Signal,
    pub class: WorkerClass,
    pub owned: usize,
    pub capacity: f64,
}

enum Router {
    Plain(Box<dyn Partitioner>),
    Cg(Box<SourceView>),
}

#[derive(Debug)]
pub struct RunResult {
    pub series: MetricsSeries,
    pub migrations: Vec<MigrationRecord>,
    pub signals: Vec<SignalRecord>,
    pub routes: Vec<RouteRecord>,
    pub stream: Vec<Message>,
    /// Canonical pairing state (cg only).
    pub canonical: Option<PairingState>,
    /// Source views after the end-of-stream flush (cg only).
    pub views: Vec<SourceView>,
    pub aggregator: Aggregator,
    /// Messages assigned to each worker.
    pub assigned: Vec<u64>,
    pub served: Vec<u64>,
    pub latency: LatencySummary,
    /// Tick at which the last message was routed.
    pub arrivals_end: u64,
    pub ticks: u64,
}

impl RunResult {
    pub fn table(&self) -> Option<&VirtualWorkerTable> {
        self.canonical.as_ref().map(PairingState::table)
    }
}

/// Generates the configured workload and runs it.
pub fn run(config: &SimConfig) -> Result<RunResult> {
    config.validate()?;
    let stream = generate_stream(&config.workload)?;
    run_stream(config, stream)
}

/// Runs a pre-built stream; the configured workload is ignored.
pub fn run_stream(config: &SimConfig, stream: Vec<Message>) -> Result<RunResult> {
    config.validate()?;
    Simulation::new(config, stream)?.run()
}

fn rates(profile: &CapacityProfile, rho: f64) -> Vec<f64> {
    profile.as_slice().iter().map(|c| c / rho).collect()
}

struct Simulation<'a> {
    config: &'a SimConfig,
    stream: Vec<Message>,
    n: usize,
    tick: u64,
    routed: usize,
    workers: Vec<WorkerRuntime>,
    profile: CapacityProfile,
    pending_profiles: VecDeque<(u64, CapacityProfile)>,
    routers: Vec<Router>,
    canonical: Option<PairingState>,
    /// `outbox[worker][source]`: signals waiting for the worker's next ack to that source.
    outbox: Vec<Vec<Vec<Signal>>>,
    last_signal: Vec<Option<u64>>,
    window_assigned: Vec<u64>,
    window_vw: Vec<HashMap<usize, u64>>,
    in_flight: Vec<AckEvent>,
    done: Vec<(usize, u64)>,
    partials: Vec<PartialCounts>,
    aggregator: Aggregator,
    aggregation_interval: usize,
    memory: MemoryTracker,
    assigned: Vec<u64>,
    sample_assigned: Vec<u64>,
    sample_latencies: Vec<u64>,
    sample_served: u64,
    last_sample: u64,
    latencies: Vec<u64>,
    series: MetricsSeries,
    migrations: Vec<MigrationRecord>,
    signals: Vec<SignalRecord>,
    routes: Vec<RouteRecord>,
    arrivals_end: u64,
}

impl<'a> Simulation<'a> {
    fn new(config: &'a SimConfig, stream: Vec<Message>) -> Result<Self> {
        let n = config.workers();
        let mut profiles: VecDeque<_> = config.capacities.profiles()?.into();
        let (_, profile) = profiles.pop_front().expect("initial profile");
        let seed = HashSeed(config.seed);
        let mut routers = Vec::with_capacity(config.sources);
        let mut canonical = None;
        if config.strategy == Strategy::Cg {
            let table = VirtualWorkerTable::new(n, config.alpha)?;
            canonical = Some(PairingState::new(table.clone()));
            for s in 0..config.sources {
                routers.push(Router::Cg(Box::new(SourceView::new(
                    s,
                    table.clone(),
                    config.epsilon,
                    seed,
                )?)));
            }
        } else {
            let params = PartitionerParams {
                epsilon: config.epsilon,
                seed,
            };
            for _ in 0..config.sources {
                routers.push(Router::Plain(build(config.strategy, n, params)?));
            }
        }
        let m = stream.len();
        let aggregation_interval = match config.aggregation_interval {
            0 => (m / 20).max(1),
            k => k as usize,
        };
        Ok(Simulation {
            workers: rates(&profile, config.rho)
                .into_iter()
                .enumerate()
                .map(|(w, r)| WorkerRuntime::new(w, r))
                .collect(),
            profile,
            pending_profiles: profiles,
            routers,
            canonical,
            outbox: vec![vec![Vec::new(); config.sources]; n],
            last_signal: vec![None; n],
            window_assigned: vec![0; n],
            window_vw: vec![HashMap::new(); n],
            in_flight: Vec::new(),
            done: Vec::new(),
            partials: (0..n).map(PartialCounts::new).collect(),
            aggregator: Aggregator::default(),
            aggregation_interval,
            memory: MemoryTracker::new(n),
            assigned: vec![0; n],
            sample_assigned: vec![0; n],
            sample_latencies: Vec::new(),
            sample_served: 0,
            last_sample: 0,
            latencies: Vec::with_capacity(m),
            series: MetricsSeries::default(),
            migrations: Vec::new(),
            signals: Vec::new(),
            routes: Vec::new(),
            arrivals_end: 0,
            config,
            stream,
            n,
            tick: 0,
            routed: 0,
        })
    }

    fn arrivals_done(&self) -> bool {
        self.routed == self.stream.len()
    }

    fn run(mut self) -> Result<RunResult> {
        while !self.arrivals_done() || self.workers.iter().any(|w| w.queue_len() > 0) {
            self.step()?;
        }
        self.deliver_acks();
        self.flush_outboxes();
        if self.last_sample < self.tick || self.series.is_empty() {
            self.sample();
        }
        self.aggregator.collect(&mut self.partials);
        let latency = LatencySummary::from_unsorted(&mut self.latencies);
        let views = self
            .routers
            .into_iter()
            .filter_map(|r| match r {
                Router::Cg(v) => Some(*v),
                Router::Plain(_) => None,
            })
            .collect();
        Ok(RunResult {
            series: self.series,
            migrations: self.migrations,
            signals: self.signals,
            routes: self.routes,
            stream: self.stream,
            canonical: self.canonical,
            views,
            aggregator: self.aggregator,
            assigned: self.assigned,
            served: self.workers.iter().map(WorkerRuntime::served).collect(),
            latency,
            arrivals_end: self.arrivals_end,
            ticks: self.tick,
        })
    }

    fn step(&mut self) -> Result<()> {
        self.tick += 1;
        self.deliver_acks();
        if !self.arrivals_done() {
            self.arrive()?;
        }
        self.serve();
        if (!self.arrivals_done() || self.arrivals_end == self.tick)
            && self.canonical.is_some()
            && self.tick.is_multiple_of(self.config.delegation.time_slot)
        {
            self.monitor();
        }
        self.apply_capacity_events();
        if self.tick.is_multiple_of(self.config.sample_interval) {
            self.sample();
        }
        Ok(())
    }

    fn deliver_acks(&mut self) {
        for ack in std::mem::take(&mut self.in_flight) {
            if let Router::Cg(view) = &mut self.routers[ack.source] {
                view.deliver(&ack.signals);
            }
        }
    }

    fn flush_outboxes(&mut self) {
        for w in 0..self.n {
            for s in 0..self.config.sources {
                let pending = std::mem::take(&mut self.outbox[w][s]);
                if let Router::Cg(view) = &mut self.routers[s] {
                    view.deliver(&pending);
                }
            }
        }
    }

    fn arrive(&mut self) -> Result<()> {
        let index = self.routed;
        let source = index % self.config.sources;
        let msg = &self.stream[index];
        let (worker, vw, probes) = match &mut self.routers[source] {
            Router::Plain(p) => {
                let rec = p.route(msg)?;
                (rec.bin, None, rec.probes)
            }
            Router::Cg(view) => {
                let (vw, worker, salt) = view.route(msg.key.as_bytes())?;
                (worker, Some(vw), salt)
            }
        };
        if self.config.record_routes {
            self.routes.push(RouteRecord {
                message_id: msg.id,
                bin: worker,
                probes,
                tick: self.tick,
            });
        }
        self.memory.observe(worker, &msg.key);
        self.partials[worker].add(&msg.key);
        self.assigned[worker] += 1;
        self.sample_assigned[worker] += 1;
        self.window_assigned[worker] += 1;
        if let Some(vw) = vw {
            *self.window_vw[worker].entry(vw).or_insert(0) += 1;
        }
        self.workers[worker].enqueue(index, self.tick);
        self.routed += 1;
        if self.routed.is_multiple_of(self.aggregation_interval) {
            self.aggregator.collect(&mut self.partials);
        }
        if self.arrivals_done() {
            self.arrivals_end = self.tick;
        }
        Ok(())
    }

    fn serve(&mut self) {
        let sources = self.config.sources;
        for w in 0..self.n {
            self.done.clear();
            self.workers[w].serve(&mut self.done);
            for &(index, arrival) in &self.done {
                let latency = self.tick - arrival;
                self.latencies.push(latency);
                self.sample_latencies.push(latency);
                self.sample_served += 1;
                let source = index % sources;
                self.in_flight.push(AckEvent {
                    message_id: self.stream[index].id,
                    worker: w,
                    source,
                    finish_tick: self.tick,
                    signals: std::mem::take(&mut self.outbox[w][source]),
                });
            }
        }
    }

    fn current_utilization(&self, w: usize) -> f64 {
        match self.config.utilization {
            UtilizationMode::Arrivals => utilization(
                self.window_assigned[w],
                self.workers[w].rate(),
                self.config.delegation.time_slot,
            ),
            UtilizationMode::QueueLength { reference } => {
                self.workers[w].queue_len() as f64 / (reference * self.profile[w] * self.n as f64)
            }
        }
    }

    fn monitor(&mut self) {
        let cfg = self.config.delegation;
        for w in 0..self.n {
            let u = self.current_utilization(w);
            let new = classify_worker(u, 1.0, &cfg);
            let canonical = self.canonical.as_mut().expect("cg run");
            let old = canonical.class_of(w);
            let Some(signal) =
                emit_signal(w, old, new, self.tick, self.last_signal[w], cfg.time_slot)
            else {
                continue;
            };
            let mut observed: Vec<(usize, u64)> = canonical
                .table()
                .owned_by(w)
                .map(|v| (v, self.window_vw[w].get(&v).copied().unwrap_or(0)))
                .collect();
            observed.sort_unstable();
            let signal = signal.with_observed_loads(observed);
            self.signals.push(SignalRecord {
                signal: signal.clone(),
                class: new,
                owned: canonical.table().owned_by(w).count(),
                capacity: self.profile[w],
            });
            self.last_signal[w] = Some(self.tick);
            if let Some(migration) = canonical.apply(&signal) {
                self.migrations.push(MigrationRecord {
                    tick: self.tick,
                    migration,
                    trigger: w,
                });
            }
            for out in &mut self.outbox[w] {
                out.push(signal.clone());
            }
        }
        self.window_assigned.iter_mut().for_each(|c| *c = 0);
        self.window_vw.iter_mut().for_each(HashMap::clear);
    }

    fn apply_capacity_events(&mut self) {
        while self
            .pending_profiles
            .front()
            .is_some_and(|(after, _)| self.routed as u64 >= *after)
        {
            let (_, profile) = self.pending_profiles.pop_front().expect("checked");
            for (worker, rate) in self
                .workers
                .iter_mut()
                .zip(rates(&profile, self.config.rho))
            {
                worker.set_rate(rate);
            }
            self.profile = profile;
        }
    }

    fn sample(&mut self) {
        let footprint = self.memory.footprint();
        self.series.push(Sample {
            tick: self.tick,
            interval: self.tick - self.last_sample,
            interval_loads: std::mem::replace(&mut self.sample_assigned, vec![0; self.n]),
            cumulative_loads: self.assigned.clone(),
            service_rates: self.workers.iter().map(WorkerRuntime::rate).collect(),
            queue_lengths: self.workers.iter().map(WorkerRuntime::queue_len).collect(),
            latency: LatencySummary::from_unsorted(&mut self.sample_latencies),
            throughput: self.sample_served,
            memory_per_worker: footprint.per_bin,
            total_memory: footprint.total,
        });
        self.sample_latencies.clear();
        self.sample_served = 0;
        self.last_sample = self.tick;
    }
}

/// Exact key frequencies of a stream.
pub fn key_frequencies(stream: &[Message]) -> BTreeMap<Key, u64> {
    let mut out = BTreeMap::new();
    for msg in stream {
        *out.entry(msg.key.clone()).or_insert(0) += 1;
    }
    out
}
