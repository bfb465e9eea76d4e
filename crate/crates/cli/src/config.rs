//! JSON run configuration. Every section and field is optional; missing
//! values fall back to the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use streambal_core::cg::DelegationConfig;
use streambal_core::metrics::ExportFormat;
use streambal_core::workload::{heterogeneous_profile, CapacitySchedule};
use streambal_core::{SimConfig, Strategy, UtilizationMode, WorkloadSpec};

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "STREAMBAL_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workload: WorkloadSpec,
    pub capacities: CapacitySection,
    pub strategy: StrategySection,
    pub delegation: DelegationConfig,
    pub simulator: SimulatorSection,
    pub output: OutputSection,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            seed: None,
            workload: WorkloadSpec::zipf(100_000, 1.0, 100_000, 0),
            capacities: CapacitySection::default(),
            strategy: StrategySection::default(),
            delegation: DelegationConfig::default(),
            simulator: SimulatorSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Worker capacities: either explicit `values`, or `n` workers of which the
/// first `y` are `factor` times faster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacitySection {
    pub n: usize,
    pub y: usize,
    pub factor: f64,
    pub values: Option<Vec<f64>>,
    pub events: Vec<CapacityEventSection>,
}

impl Default for CapacitySection {
    fn default() -> Self {
        CapacitySection {
            n: 10,
            y: 0,
            factor: 1.0,
            values: None,
            events: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityEventSection {
    pub after_messages: u64,
    #[serde(default)]
    pub y: usize,
    #[serde(default = "one")]
    pub factor: f64,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

fn profile(n: usize, y: usize, factor: f64, values: &Option<Vec<f64>>) -> CliResult<Vec<f64>> {
    match values {
        Some(v) => Ok(v.clone()),
        None => Ok(heterogeneous_profile(n, y, factor)?),
    }
}

impl CapacitySection {
    pub fn schedule(&self) -> CliResult<CapacitySchedule> {
        let mut s = CapacitySchedule::fixed(profile(self.n, self.y, self.factor, &self.values)?);
        let n = s.workers();
        for ev in &self.events {
            s = s.with_event(ev.after_messages, profile(n, ev.y, ev.factor, &ev.values)?);
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySection {
    pub name: Strategy,
    pub epsilon: f64,
    pub alpha: usize,
}

impl Default for StrategySection {
    fn default() -> Self {
        StrategySection {
            name: Strategy::Cg,
            epsilon: 0.01,
            alpha: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorSection {
    pub sources: usize,
    pub rho: f64,
    pub sample_interval: u64,
    pub aggregation_interval: u64,
    pub utilization: UtilizationMode,
}

impl Default for SimulatorSection {
    fn default() -> Self {
        SimulatorSection {
            sources: 1,
            rho: 0.8,
            sample_interval: 1_000,
            aggregation_interval: 0,
            utilization: UtilizationMode::Arrivals,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: ExportFormat,
    pub log_routing: bool,
    pub log_migrations: bool,
    pub heavy_hitters: Option<HeavyHittersSection>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            format: ExportFormat::Csv,
            log_routing: false,
            log_migrations: false,
            heavy_hitters: None,
        }
    }
}

/// Per-worker SpaceSaving summaries of size `k`, merged and reported top `top`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeavyHittersSection {
    pub k: usize,
    pub top: usize,
}

impl Default for HeavyHittersSection {
    fn default() -> Self {
        HeavyHittersSection { k: 50, top: 10 }
    }
}

/// Command-line values that beat the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub strategy: Option<Strategy>,
    pub out: Option<PathBuf>,
    pub format: Option<ExportFormat>,
    pub log_routing: bool,
    pub log_migrations: bool,
}

pub fn load(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            CliError::Validation(format!("invalid seed: {SEED_ENV}={v:?} is not a u64"))
        }),
        Err(_) => Ok(None),
    }
}

impl FileConfig {
    /// Applies overrides and fills in the seed: flag, then file, then
    /// environment, then 0.
    pub fn resolve(mut self, o: &Overrides) -> CliResult<FileConfig> {
        let seed = match o.seed.or(self.seed) {
            Some(s) => s,
            None => env_seed()?.unwrap_or(0),
        };
        self.seed = Some(seed);
        self.workload = self.workload.with_seed(seed);
        if let Some(s) = o.strategy {
            self.strategy.name = s;
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(f) = o.format {
            self.output.format = f;
        }
        self.output.log_routing |= o.log_routing;
        self.output.log_migrations |= o.log_migrations;
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn sim_config(&self) -> CliResult<SimConfig> {
        let mut cfg = SimConfig::new(
            self.strategy.name,
            self.capacities.schedule()?,
            self.workload.clone(),
        );
        cfg.epsilon = self.strategy.epsilon;
        cfg.alpha = self.strategy.alpha;
        cfg.delegation = self.delegation;
        cfg.seed = self.seed();
        cfg.sources = self.simulator.sources;
        cfg.rho = self.simulator.rho;
        cfg.sample_interval = self.simulator.sample_interval;
        cfg.aggregation_interval = self.simulator.aggregation_interval;
        cfg.utilization = self.simulator.utilization;
        cfg.record_routes = self.output.log_routing || self.output.heavy_hitters.is_some();
        cfg.validate()?;
        Ok(cfg)
    }
}
