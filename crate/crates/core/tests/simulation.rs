use std::collections::HashSet;

use streambal_core::cg::{SourceView, VirtualWorkerTable};
use streambal_core::workload::{generate_stream, heterogeneous_profile};
use streambal_core::*;

const SEED: u64 = 42;

fn max_queue_at(r: &RunResult, tick: u64) -> usize {
    r.series
        .samples
        .iter()
        .find(|s| s.tick >= tick)
        .unwrap()
        .max_queue()
}

/// Queue growth under KG is linear from the first ticks, so the end value sits
/// at about 10x the 10% value; allow 10% for sampling noise.
const LINEAR_GROWTH_SLACK: f64 = 0.9;

#[test]
fn kg_queue_grows_linearly_on_heterogeneous_profile() {
    let m = 1_000_000;
    let caps = heterogeneous_profile(10, 3, 5.0).unwrap();
    let mut cfg = SimConfig::new(
        Strategy::Kg,
        CapacitySchedule::fixed(caps),
        WorkloadSpec::zipf(100_000, 1.0, m, SEED),
    );
    cfg.sample_interval = m / 100;
    let r = run(&cfg).unwrap();
    let early = max_queue_at(&r, m / 10);
    let end = max_queue_at(&r, r.arrivals_end);
    assert!(
        end as f64 >= LINEAR_GROWTH_SLACK * 10.0 * early as f64,
        "end {end} vs 10% {early}"
    );
}

#[test]
fn cg_homogeneous_final_imbalance() {
    let m = 100_000;
    let cfg = SimConfig::new(
        Strategy::Cg,
        CapacitySchedule::uniform(10),
        WorkloadSpec::zipf(100_000, 1.0, m, SEED),
    );
    let r = run(&cfg).unwrap();
    let u: Vec<f64> = r.assigned.iter().map(|&l| l as f64).collect();
    let avg = u.iter().sum::<f64>() / u.len() as f64;
    let max = u.iter().copied().fold(0.0, f64::max);
    assert!(max - avg <= 0.05 * avg, "{:?}", r.assigned);
}

#[test]
fn cg_with_one_virtual_worker_and_huge_epsilon_is_key_grouping() {
    let stream = generate_stream(&WorkloadSpec::zipf(2_000, 1.0, 20_000, SEED)).unwrap();
    let table = VirtualWorkerTable::new(8, 1).unwrap();
    let mut view = SourceView::new(0, table, 1e9, HashSeed(SEED)).unwrap();
    let mut placed: HashSet<(&Key, usize)> = HashSet::new();
    for m in &stream {
        let (vw, worker, salt) = view.route(m.key.as_bytes()).unwrap();
        assert_eq!((vw, salt), (worker, 1));
        placed.insert((&m.key, worker));
    }
    let distinct: HashSet<&Key> = stream.iter().map(|m| &m.key).collect();
    assert_eq!(placed.len(), distinct.len());
}

#[test]
fn sources_without_signals_route_identically() {
    let stream = generate_stream(&WorkloadSpec::zipf(500, 1.2, 5_000, SEED)).unwrap();
    let table = VirtualWorkerTable::new(5, 4).unwrap();
    let mut a = SourceView::new(0, table.clone(), 0.01, HashSeed(SEED)).unwrap();
    let mut b = SourceView::new(1, table, 0.01, HashSeed(SEED)).unwrap();
    for m in &stream {
        assert_eq!(
            a.route(m.key.as_bytes()).unwrap(),
            b.route(m.key.as_bytes()).unwrap()
        );
    }
}

#[test]
fn sg_queues_stay_bounded() {
    let m = 200_000;
    let mut cfg = SimConfig::new(
        Strategy::Sg,
        CapacitySchedule::uniform(10),
        WorkloadSpec::zipf(10_000, 1.0, m, SEED),
    );
    cfg.sample_interval = m / 100;
    let r = run(&cfg).unwrap();
    let early = max_queue_at(&r, m / 10);
    let worst = r
        .series
        .samples
        .iter()
        .map(|s| s.max_queue())
        .max()
        .unwrap();
    assert!(worst <= early + 2, "worst {worst} early {early}");
}

#[test]
fn latency_and_fifo() {
    let mut cfg = SimConfig::new(
        Strategy::Kg,
        CapacitySchedule::fixed(vec![1.0, 3.0]),
        WorkloadSpec::zipf(50, 1.5, 10_000, SEED),
    );
    cfg.sample_interval = 100;
    let r = run(&cfg).unwrap();
    assert_eq!(r.served.iter().sum::<u64>(), 10_000);
    assert!(r.series.samples.windows(2).all(|w| w[0].tick < w[1].tick));
    assert!(r
        .series
        .samples
        .last()
        .unwrap()
        .queue_lengths
        .iter()
        .all(|&q| q == 0));
    assert_eq!(r.latency.count, 10_000);
}

#[test]
fn queue_length_utilization_mode_runs() {
    let mut cfg = SimConfig::new(
        Strategy::Cg,
        CapacitySchedule::fixed(heterogeneous_profile(6, 2, 4.0).unwrap()),
        WorkloadSpec::zipf(1_000, 1.0, 50_000, SEED),
    );
    cfg.utilization = UtilizationMode::QueueLength { reference: 20.0 };
    cfg.delegation.time_slot = 500;
    let r = run(&cfg).unwrap();
    assert!(!r.migrations.is_empty());
    assert_eq!(r.served.iter().sum::<u64>(), 50_000);
}
