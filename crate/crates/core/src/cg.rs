//! Consistent grouping: PoRC over a pool of virtual workers, plus the
//! delegation loop that moves virtual workers from busy to idle workers.
//!
//! Workers classify their own utilization each time slot and emit binary
//! signals. Signals ride on acknowledgments to the sources, so each source
//! keeps its own [`SourceView`] of the virtual-worker table. Views apply
//! signals in a canonical `(issued_at, worker)` order and therefore agree once
//! every signal has been delivered.

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::HashSeed;
use crate::partitioners::{LoadVector, PowerOfRandomChoices};
use crate::types::{Signal, SignalKind};

/// Maps each virtual worker to the physical worker that serves it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VirtualWorkerTable {
    assignment: Vec<usize>,
    workers: usize,
    alpha: usize,
}

impl VirtualWorkerTable {
    /// `alpha` virtual workers per worker, virtual worker `v` on worker `v mod n`.
    pub fn new(n: usize, alpha: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("n", "must be at least 1"));
        }
        if alpha == 0 {
            return Err(Error::validation("alpha", "must be at least 1"));
        }
        Ok(VirtualWorkerTable {
            assignment: (0..n * alpha).map(|v| v % n).collect(),
            workers: n,
            alpha,
        })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    #[inline]
    pub fn worker_of(&self, vw: usize) -> usize {
        self.assignment[vw]
    }

    pub fn virtual_workers(&self) -> usize {
        self.assignment.len()
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn owned_by(&self, worker: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |&(_, &w)| w == worker)
            .map(|(v, _)| v)
    }

    /// Number of virtual workers held by each worker.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.workers];
        for &w in &self.assignment {
            counts[w] += 1;
        }
        counts
    }

    fn reassign(&mut self, vw: usize, to: usize) {
        self.assignment[vw] = to;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorkerClass {
    Idle,
    Ok,
    Busy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelegationConfig {
    pub theta_idle: f64,
    pub theta_busy: f64,
    /// Minimum ticks between two signals from one worker; also the monitoring period.
    pub time_slot: u64,
}

impl Default for DelegationConfig {
    fn default() -> Self {
        DelegationConfig {
            theta_idle: 0.75,
            theta_busy: 0.85,
            time_slot: 1_000,
        }
    }
}

impl DelegationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_idle > 0.0 && self.theta_idle < 1.0) {
            return Err(Error::validation(
                "theta_idle",
                format!("must lie in (0, 1), got {}", self.theta_idle),
            ));
        }
        if !(self.theta_busy > self.theta_idle && self.theta_busy.is_finite()) {
            return Err(Error::validation(
                "theta_busy",
                format!("must exceed theta_idle, got {}", self.theta_busy),
            ));
        }
        if self.time_slot == 0 {
            return Err(Error::validation("time_slot", "must be at least 1 tick"));
        }
        Ok(())
    }
}

/// Busy above `theta_busy * capacity`, idle below `theta_idle * capacity`;
/// values exactly on a threshold are Ok.
pub fn classify_worker(utilization: f64, capacity: f64, config: &DelegationConfig) -> WorkerClass {
    let ratio = utilization / capacity;
    if ratio > config.theta_busy {
        WorkerClass::Busy
    } else if ratio < config.theta_idle {
        WorkerClass::Idle
    } else {
        WorkerClass::Ok
    }
}

/// Signal for a transition into Busy or Idle, unless the worker signalled less
/// than `time_slot` ticks ago.
pub fn emit_signal(
    worker: usize,
    old: WorkerClass,
    new: WorkerClass,
    tick: u64,
    last_signal: Option<u64>,
    time_slot: u64,
) -> Option<Signal> {
    if old == new {
        return None;
    }
    if last_signal.is_some_and(|last| tick.saturating_sub(last) < time_slot) {
        return None;
    }
    let kind = match new {
        WorkerClass::Busy => SignalKind::DecreaseWorkload,
        WorkerClass::Idle => SignalKind::IncreaseWorkload,
        WorkerClass::Ok => return None,
    };
    Some(Signal::new(worker, kind, tick))
}

/// First-come-first-serve queues of idle and busy workers.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PairingQueues {
    pub idle: VecDeque<usize>,
    pub busy: VecDeque<usize>,
}

impl PairingQueues {
    pub fn class_of(&self, worker: usize) -> WorkerClass {
        if self.busy.contains(&worker) {
            WorkerClass::Busy
        } else if self.idle.contains(&worker) {
            WorkerClass::Idle
        } else {
            WorkerClass::Ok
        }
    }

    /// Moves `worker` to the tail of the queue matching `kind`, unless it is
    /// already waiting there.
    pub fn enqueue(&mut self, worker: usize, kind: SignalKind) {
        let (target, other) = match kind {
            SignalKind::DecreaseWorkload => (&mut self.busy, &mut self.idle),
            SignalKind::IncreaseWorkload => (&mut self.idle, &mut self.busy),
        };
        other.retain(|&w| w != worker);
        if !target.contains(&worker) {
            target.push_back(worker);
        }
    }
}

/// Per-virtual-worker load as seen when choosing what to migrate.
pub trait VirtualLoads {
    fn load(&self, worker: usize, vw: usize) -> u64;
}

impl VirtualLoads for [u64] {
    fn load(&self, _worker: usize, vw: usize) -> u64 {
        self[vw]
    }
}

impl VirtualLoads for HashMap<usize, u64> {
    fn load(&self, _worker: usize, vw: usize) -> u64 {
        self.get(&vw).copied().unwrap_or(0)
    }
}

/// Latest per-virtual-worker counts each worker reported in its signals.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReportedLoads {
    by_worker: HashMap<usize, HashMap<usize, u64>>,
}

impl ReportedLoads {
    pub fn record(&mut self, signal: &Signal) {
        if !signal.observed_loads.is_empty() {
            self.by_worker.insert(
                signal.worker,
                signal.observed_loads.iter().copied().collect(),
            );
        }
    }
}

impl VirtualLoads for ReportedLoads {
    fn load(&self, worker: usize, vw: usize) -> u64 {
        self.by_worker
            .get(&worker)
            .and_then(|m| m.get(&vw))
            .copied()
            .unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Migration {
    pub vw: usize,
    pub from: usize,
    pub to: usize,
}

/// Pairs the longest-waiting busy worker with the longest-waiting idle worker
/// and moves the busy worker's most-loaded virtual worker (lowest id on ties).
pub fn pair_and_migrate(
    queues: &mut PairingQueues,
    table: &mut VirtualWorkerTable,
    loads: &(impl VirtualLoads + ?Sized),
) -> Option<Migration> {
    loop {
        let (&from, &to) = (queues.busy.front()?, queues.idle.front()?);
        let vw = table
            .owned_by(from)
            .map(|vw| (loads.load(from, vw), vw))
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
            .map(|(_, vw)| vw);
        queues.busy.pop_front();
        let Some(vw) = vw else {
            continue;
        };
        queues.idle.pop_front();
        table.reassign(vw, to);
        return Some(Migration { vw, from, to });
    }
}

/// Table and queues evolved by applying signals one at a time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairingState {
    table: VirtualWorkerTable,
    queues: PairingQueues,
    reported: ReportedLoads,
}

impl PairingState {
    pub fn new(table: VirtualWorkerTable) -> Self {
        PairingState {
            table,
            queues: PairingQueues::default(),
            reported: ReportedLoads::default(),
        }
    }

    pub fn table(&self) -> &VirtualWorkerTable {
        &self.table
    }

    pub fn queues(&self) -> &PairingQueues {
        &self.queues
    }

    pub fn class_of(&self, worker: usize) -> WorkerClass {
        self.queues.class_of(worker)
    }

    pub fn apply(&mut self, signal: &Signal) -> Option<Migration> {
        self.reported.record(signal);
        self.queues.enqueue(signal.worker, signal.kind);
        pair_and_migrate(&mut self.queues, &mut self.table, &self.reported)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MigrationRecord {
    pub tick: u64,
    pub migration: Migration,
    pub trigger: usize,
}

/// Writes `tick,vw,from_worker,to_worker,trigger_worker` rows.
pub fn write_migration_log(path: &Path, log: &[MigrationRecord]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["tick", "vw", "from_worker", "to_worker", "trigger_worker"])
        .map_err(csv_err)?;
    for r in log {
        w.serialize((
            r.tick,
            r.migration.vw,
            r.migration.from,
            r.migration.to,
            r.trigger,
        ))
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A source's eventually-consistent copy of the table, and its PoRC router
/// over the virtual workers.
#[derive(Clone, Debug)]
pub struct SourceView {
    id: usize,
    initial: VirtualWorkerTable,
    state: PairingState,
    /// Applied signals in canonical order.
    log: Vec<Signal>,
    router: PowerOfRandomChoices,
}

fn canonical(s: &Signal) -> (u64, usize) {
    (s.issued_at, s.worker)
}

impl SourceView {
    pub fn new(id: usize, table: VirtualWorkerTable, epsilon: f64, seed: HashSeed) -> Result<Self> {
        let router = PowerOfRandomChoices::new(table.virtual_workers(), epsilon, seed)?;
        Ok(SourceView {
            id,
            initial: table.clone(),
            state: PairingState::new(table),
            log: Vec::new(),
            router,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn table(&self) -> &VirtualWorkerTable {
        self.state.table()
    }

    pub fn queues(&self) -> &PairingQueues {
        self.state.queues()
    }

    pub fn state(&self) -> &PairingState {
        &self.state
    }

    /// Messages this source has routed to each virtual worker.
    pub fn virtual_loads(&self) -> &LoadVector {
        crate::partitioners::Partitioner::loads(&self.router)
    }

    /// Routes a key to `(virtual worker, physical worker)`.
    pub fn route(&mut self, key: &[u8]) -> Result<(usize, usize, u64)> {
        let (vw, salt) = self.router.route_key(key)?;
        Ok((vw, self.state.table.worker_of(vw), salt))
    }

    /// Applies signals that arrived on an acknowledgment. Returns the
    /// migrations this view performed; a late signal that sorts before already
    /// applied ones triggers a replay from the initial table, reported as `None`.
    pub fn deliver(&mut self, signals: &[Signal]) -> Option<Vec<Migration>> {
        let mut applied = Vec::new();
        let mut replay = false;
        for s in signals {
            let pos = self.log.partition_point(|x| canonical(x) < canonical(s));
            if self
                .log
                .get(pos)
                .is_some_and(|x| canonical(x) == canonical(s))
            {
                continue;
            }
            if pos == self.log.len() && !replay {
                applied.extend(self.state.apply(s));
            } else {
                replay = true;
            }
            self.log.insert(pos, s.clone());
        }
        if replay {
            self.state = PairingState::new(self.initial.clone());
            for s in &self.log {
                self.state.apply(s);
            }
            None
        } else {
            Some(applied)
        }
    }
}

/// Shorthand for [`SourceView::deliver`].
pub fn deliver_piggybacked(view: &mut SourceView, signals: &[Signal]) -> Option<Vec<Migration>> {
    view.deliver(signals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_layout() {
        let t = VirtualWorkerTable::new(2, 3).unwrap();
        assert_eq!(t.assignment(), &[0, 1, 0, 1, 0, 1]);
        let t = VirtualWorkerTable::new(1, 5).unwrap();
        assert!(t.assignment().iter().all(|&w| w == 0));
        let t = VirtualWorkerTable::new(10, 10).unwrap();
        assert_eq!(t.counts(), vec![10; 10]);
        assert!(VirtualWorkerTable::new(0, 3).is_err());
        assert!(VirtualWorkerTable::new(3, 0).is_err());
    }

    #[test]
    fn classification() {
        let cfg = DelegationConfig::default();
        assert_eq!(classify_worker(0.9, 1.0, &cfg), WorkerClass::Busy);
        assert_eq!(classify_worker(0.5, 1.0, &cfg), WorkerClass::Idle);
        assert_eq!(classify_worker(0.8, 1.0, &cfg), WorkerClass::Ok);
        // 15 arrivals over 10 ticks at 2 messages per tick sits on theta_idle.
        assert_eq!(classify_worker(15.0 / 10.0, 2.0, &cfg), WorkerClass::Ok);
        assert_eq!(classify_worker(0.85, 1.0, &cfg), WorkerClass::Ok);
    }

    #[test]
    fn delegation_config_validation() {
        assert!(DelegationConfig::default().validate().is_ok());
        let bad = DelegationConfig {
            theta_idle: 0.9,
            theta_busy: 0.8,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DelegationConfig {
            time_slot: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn signal_rules() {
        use WorkerClass::*;
        let s = emit_signal(3, Ok, Busy, 20, Some(0), 10).unwrap();
        assert_eq!(
            (s.worker, s.kind, s.issued_at),
            (3, SignalKind::DecreaseWorkload, 20)
        );
        assert_eq!(
            emit_signal(3, Ok, Idle, 20, None, 10).unwrap().kind,
            SignalKind::IncreaseWorkload
        );
        assert!(emit_signal(3, Busy, Busy, 20, Some(0), 10).is_none());
        assert!(emit_signal(3, Ok, Idle, 5, Some(0), 10).is_none());
        assert!(emit_signal(3, Busy, Ok, 50, Some(0), 10).is_none());
    }

    #[test]
    fn no_pair_without_idle() {
        let mut q = PairingQueues::default();
        q.busy.push_back(2);
        let mut t = VirtualWorkerTable::new(6, 2).unwrap();
        assert!(pair_and_migrate(&mut q, &mut t, &[0u64; 12][..]).is_none());
        assert_eq!(q.busy, [2]);
    }

    #[test]
    fn migrates_most_loaded() {
        // Worker 2 of 6 owns virtual workers 2 and 8; make them 7 and 4.
        let mut q = PairingQueues::default();
        q.busy.push_back(2);
        q.idle.push_back(5);
        let mut t = VirtualWorkerTable::new(6, 2).unwrap();
        let loads: HashMap<usize, u64> = [(2, 7), (8, 4)].into_iter().collect();
        let m = pair_and_migrate(&mut q, &mut t, &loads).unwrap();
        assert_eq!(
            m,
            Migration {
                vw: 2,
                from: 2,
                to: 5
            }
        );
        assert_eq!(t.worker_of(2), 5);
        assert!(q.busy.is_empty() && q.idle.is_empty());
    }

    #[test]
    fn one_migration_per_call() {
        let mut q = PairingQueues::default();
        q.busy.extend([2, 4]);
        q.idle.extend([5, 6]);
        let mut t = VirtualWorkerTable::new(8, 2).unwrap();
        let m = pair_and_migrate(&mut q, &mut t, &[0u64; 16][..]).unwrap();
        assert_eq!((m.from, m.to), (2, 5));
        assert_eq!(q.busy, [4]);
        assert_eq!(q.idle, [6]);
        assert_eq!(t.counts().iter().sum::<usize>(), 16);
    }

    #[test]
    fn busy_worker_without_virtual_workers_is_skipped() {
        let mut t = VirtualWorkerTable::new(2, 1).unwrap();
        let mut q = PairingQueues::default();
        q.busy.push_back(0);
        q.idle.push_back(1);
        pair_and_migrate(&mut q, &mut t, &[0u64; 2][..]).unwrap();
        // Worker 0 now owns nothing; a second busy signal from it is dropped.
        q.busy.extend([0, 1]);
        q.idle.push_back(0);
        let m = pair_and_migrate(&mut q, &mut t, &[0u64; 2][..]).unwrap();
        assert_eq!((m.from, m.to), (1, 0));
    }

    #[test]
    fn queues_hold_each_worker_once() {
        let mut q = PairingQueues::default();
        q.enqueue(1, SignalKind::DecreaseWorkload);
        q.enqueue(1, SignalKind::DecreaseWorkload);
        assert_eq!(q.busy, [1]);
        q.enqueue(1, SignalKind::IncreaseWorkload);
        assert!(q.busy.is_empty());
        assert_eq!(q.idle, [1]);
        assert_eq!(q.class_of(1), WorkerClass::Idle);
    }

    fn signals() -> Vec<Signal> {
        let kinds = [SignalKind::DecreaseWorkload, SignalKind::IncreaseWorkload];
        (0..40u64)
            .map(|i| {
                let worker = (i * 7 % 5) as usize;
                Signal::new(worker, kinds[(i % 3 == 0) as usize], 10 * i)
                    .with_observed_loads(vec![(worker, i), (worker + 5, 40 - i)])
            })
            .collect()
    }

    fn view() -> SourceView {
        SourceView::new(0, VirtualWorkerTable::new(5, 4).unwrap(), 0.01, HashSeed(1)).unwrap()
    }

    #[test]
    fn single_source_tracks_canonical() {
        let mut canonical = PairingState::new(VirtualWorkerTable::new(5, 4).unwrap());
        let mut v = view();
        for s in signals() {
            let expected = canonical.apply(&s);
            let got = v.deliver(std::slice::from_ref(&s)).unwrap();
            assert_eq!(got, expected.into_iter().collect::<Vec<_>>());
            assert_eq!(v.state(), &canonical);
        }
        assert_eq!(v.table().counts().iter().sum::<usize>(), 20);
    }

    #[test]
    fn interleaved_delivery_converges() {
        let all = signals();
        let mut a = view();
        let mut b = view();
        for s in &all {
            a.deliver(std::slice::from_ref(s));
        }
        // Deliver worker by worker: each worker's signals stay in order but the
        // interleaving across workers differs from the canonical one.
        for w in (0..5).rev() {
            let batch: Vec<Signal> = all.iter().filter(|s| s.worker == w).cloned().collect();
            for chunk in batch.chunks(3) {
                b.deliver(chunk);
            }
        }
        assert_eq!(a.state(), b.state());
        assert_eq!(a.table(), b.table());
    }

    #[test]
    fn duplicate_delivery_is_ignored() {
        let all = signals();
        let mut a = view();
        a.deliver(&all);
        let before = a.state().clone();
        a.deliver(&all[..10]);
        assert_eq!(a.state(), &before);
    }

    #[test]
    fn routes_through_table() {
        let mut v = view();
        for i in 0..100u64 {
            let (vw, w, _) = v.route(i.to_string().as_bytes()).unwrap();
            assert_eq!(v.table().worker_of(vw), w);
        }
        assert_eq!(v.virtual_loads().total(), 100);
    }
}
