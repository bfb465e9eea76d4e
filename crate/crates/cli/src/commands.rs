use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use streambal_core::aggregation::{ss_merge, worker_summaries, write_heavy_hitters_report};
use streambal_core::cg::write_migration_log;
use streambal_core::metrics::{imbalance, normalized_imbalance};
use streambal_core::partitioners::write_routing_log;
use streambal_core::simulator::key_frequencies;
use streambal_core::workload::{generate_stream, write_trace};
use streambal_core::{run, RunResult, Strategy, WorkloadSpec};

use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, MANIFEST_FILE};

/// One line of `summary.csv` / `sweep.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub n: usize,
    pub epsilon: f64,
    pub alpha: usize,
    pub z: Option<f64>,
    pub seed: u64,
    pub final_imbalance: Option<f64>,
    pub final_norm_imbalance: Option<f64>,
    pub total_memory: Option<u64>,
    pub max_queue: Option<u64>,
    pub p99_lat: Option<u64>,
    pub error: String,
}

impl SummaryRow {
    fn point(config: &FileConfig) -> Self {
        let z = match &config.workload {
            WorkloadSpec::Zipf { zipf_exponent, .. } => Some(*zipf_exponent),
            WorkloadSpec::Trace { .. } => None,
        };
        SummaryRow {
            strategy: config.strategy.name.to_string(),
            n: config
                .capacities
                .values
                .as_ref()
                .map_or(config.capacities.n, Vec::len),
            epsilon: config.strategy.epsilon,
            alpha: config.strategy.alpha,
            z,
            seed: config.seed(),
            final_imbalance: None,
            final_norm_imbalance: None,
            total_memory: None,
            max_queue: None,
            p99_lat: None,
            error: String::new(),
        }
    }

    fn fill(&mut self, r: &RunResult) -> CliResult<()> {
        let last = r
            .series
            .samples
            .last()
            .expect("every run has a final sample");
        let total_rate: f64 = last.service_rates.iter().sum();
        let caps: Vec<f64> = last.service_rates.iter().map(|x| x / total_rate).collect();
        let m: u64 = r.assigned.iter().sum();
        self.final_imbalance = Some(sig(imbalance(&r.assigned, &caps)?));
        self.final_norm_imbalance = Some(if m == 0 {
            0.0
        } else {
            sig(normalized_imbalance(&r.assigned, &caps, m)?)
        });
        self.total_memory = Some(last.total_memory as u64);
        self.max_queue = r.series.samples.iter().map(|s| s.max_queue() as u64).max();
        self.p99_lat = Some(r.latency.p99);
        Ok(())
    }
}

fn sig(x: f64) -> f64 {
    streambal_core::metrics::sig6(x)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_rows(path: &Path, rows: &[SummaryRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn simulate(config: FileConfig) -> CliResult<()> {
    let start = Instant::now();
    let sim = config.sim_config()?;
    let out = config.output.dir.clone();
    create_dir(&out)?;
    let r = run(&sim)?;
    let mut outputs = Vec::new();

    let metrics = out.join(format!("metrics.{}", config.output.format.extension()));
    r.series.export(&metrics, config.output.format)?;
    outputs.push(metrics);

    let mut row = SummaryRow::point(&config);
    row.fill(&r)?;
    let summary = out.join("summary.csv");
    write_rows(&summary, std::slice::from_ref(&row))?;
    outputs.push(summary);

    if config.output.log_routing {
        let path = out.join("routing.csv");
        write_routing_log(&path, &r.stream, &r.routes)?;
        outputs.push(path);
    }
    if config.output.log_migrations {
        let path = out.join("migrations.csv");
        write_migration_log(&path, &r.migrations)?;
        outputs.push(path);
    }
    if let Some(hh) = &config.output.heavy_hitters {
        let bins: Vec<usize> = r.routes.iter().map(|rec| rec.bin).collect();
        let summaries = worker_summaries(&r.stream, &bins, sim.workers(), hh.k)?;
        let merged = ss_merge(&summaries, hh.k)?;
        let truth: HashMap<_, _> = key_frequencies(&r.stream).into_iter().collect();
        let path = out.join("heavy_hitters.csv");
        write_heavy_hitters_report(&path, &merged, hh.top, Some(&truth))?;
        outputs.push(path);
    }

    RunManifest::new("simulate", &config, outputs, start.elapsed())
        .write(&out.join(MANIFEST_FILE))?;
    println!(
        "{} n={} imbalance={} norm_imbalance={} memory={} max_queue={} p99_lat={}",
        row.strategy,
        row.n,
        row.final_imbalance.unwrap_or_default(),
        row.final_norm_imbalance.unwrap_or_default(),
        row.total_memory.unwrap_or_default(),
        row.max_queue.unwrap_or_default(),
        row.p99_lat.unwrap_or_default(),
    );
    Ok(())
}

/// Values to sweep; an empty axis keeps the base configuration's value.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub strategy: Vec<Strategy>,
    pub n: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub alpha: Vec<usize>,
    pub z: Vec<f64>,
    pub seed: Vec<u64>,
}

fn axis<T: Clone>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().cloned().map(Some).collect()
    }
}

impl Grid {
    pub fn load(path: &Path) -> CliResult<Grid> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("invalid grid {}: {e}", path.display())))
    }

    /// Grid points in nested order strategy, n, epsilon, alpha, z, seed.
    pub fn points(&self, base: &FileConfig) -> Vec<(FileConfig, Option<String>)> {
        let mut out = Vec::new();
        for s in axis(&self.strategy) {
            for n in axis(&self.n) {
                for eps in axis(&self.epsilon) {
                    for alpha in axis(&self.alpha) {
                        for z in axis(&self.z) {
                            for seed in axis(&self.seed) {
                                let mut c = base.clone();
                                let mut problem = None;
                                if let Some(s) = s {
                                    c.strategy.name = s;
                                }
                                if let Some(n) = n {
                                    if c.capacities.values.is_some() {
                                        problem = Some(
                                            "invalid capacities.n: explicit capacity values fix n"
                                                .into(),
                                        );
                                    }
                                    c.capacities.n = n;
                                }
                                if let Some(e) = eps {
                                    c.strategy.epsilon = e;
                                }
                                if let Some(a) = alpha {
                                    c.strategy.alpha = a;
                                }
                                if let Some(z) = z {
                                    match &mut c.workload {
                                        WorkloadSpec::Zipf { zipf_exponent, .. } => {
                                            *zipf_exponent = z
                                        }
                                        WorkloadSpec::Trace { .. } => {
                                            problem = Some(
                                                "invalid z: trace workloads have no exponent"
                                                    .into(),
                                            )
                                        }
                                    }
                                }
                                if let Some(seed) = seed {
                                    c.seed = Some(seed);
                                    c.workload = c.workload.with_seed(seed);
                                }
                                out.push((c, problem));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn sweep_point(config: &FileConfig, problem: Option<String>) -> SummaryRow {
    let mut row = SummaryRow::point(config);
    let result = match problem {
        Some(p) => Err(CliError::Validation(p)),
        None => config
            .sim_config()
            .and_then(|sim| run(&sim).map_err(CliError::from))
            .and_then(|r| row.fill(&r)),
    };
    if let Err(e) = result {
        row.error = e.to_string();
    }
    row
}

pub fn sweep(config: FileConfig, grid: &Grid) -> CliResult<()> {
    let start = Instant::now();
    let out = config.output.dir.clone();
    create_dir(&out)?;
    let rows: Vec<SummaryRow> = grid
        .points(&config)
        .into_par_iter()
        .map(|(c, problem)| sweep_point(&c, problem))
        .collect();
    let path = out.join("sweep.csv");
    write_rows(&path, &rows)?;
    RunManifest::new("sweep", &config, vec![path], start.elapsed())
        .write(&out.join(MANIFEST_FILE))?;
    let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
    println!("{} points, {failed} failed", rows.len());
    if failed > 0 {
        for r in rows.iter().filter(|r| !r.error.is_empty()) {
            eprintln!(
                "{} n={} epsilon={}: {}",
                r.strategy, r.n, r.epsilon, r.error
            );
        }
        return Err(CliError::Runtime(format!("{failed} sweep points failed")));
    }
    Ok(())
}

pub fn gen_trace(config: FileConfig, out: &Path) -> CliResult<()> {
    let start = Instant::now();
    if matches!(config.workload, WorkloadSpec::Trace { .. }) {
        return Err(CliError::Validation(
            "invalid workload: gen-trace needs a zipf workload".into(),
        ));
    }
    let stream = generate_stream(&config.workload)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_trace(out, &stream)?;
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let manifest = out.with_file_name(format!("{name}.manifest.json"));
    RunManifest::new(
        "gen-trace",
        &config,
        vec![PathBuf::from(out)],
        start.elapsed(),
    )
    .write(&manifest)?;
    println!("{} messages -> {}", stream.len(), out.display());
    Ok(())
}
