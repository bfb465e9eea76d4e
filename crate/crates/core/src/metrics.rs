//! Load imbalance, memory bounds, and the sampled time series a simulation
//! produces, with CSV/JSON export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_shapes(loads: &[u64], capacities: &[f64]) -> Result<()> {
    if loads.len() != capacities.len() || loads.is_empty() {
        return Err(Error::validation(
            "capacities",
            format!("{} loads vs {} capacities", loads.len(), capacities.len()),
        ));
    }
    if let Some(w) = capacities.iter().position(|&c| c.is_nan() || c <= 0.0) {
        return Err(Error::validation(
            format!("capacities[{w}]"),
            "capacity must be positive",
        ));
    }
    Ok(())
}

/// Maximum minus average normalized load (`load_w / c_w`).
pub fn imbalance(loads: &[u64], capacities: &[f64]) -> Result<f64> {
    check_shapes(loads, capacities)?;
    let (max, sum) = loads
        .iter()
        .zip(capacities)
        .map(|(&l, &c)| l as f64 / c)
        .fold((f64::MIN, 0.0), |(max, sum), u| (max.max(u), sum + u));
    Ok((max - sum / loads.len() as f64).max(0.0))
}

/// [`imbalance`] divided by the average normalized load.
pub fn normalized_imbalance(loads: &[u64], capacities: &[f64], m: u64) -> Result<f64> {
    if m == 0 {
        return Err(Error::validation("m", "no messages routed"));
    }
    let raw = imbalance(loads, capacities)?;
    let avg = loads
        .iter()
        .zip(capacities)
        .map(|(&l, &c)| l as f64 / c)
        .sum::<f64>()
        / loads.len() as f64;
    Ok(if avg > 0.0 { raw / avg } else { 0.0 })
}

/// Imbalance in message units: `max(load) - mean(load)`.
pub fn message_imbalance(loads: &[u64]) -> f64 {
    imbalance(loads, &vec![1.0; loads.len()]).unwrap_or(0.0)
}

/// Upper bound on shuffle-grouping memory: a key occupies at most
/// `min(count, n)` workers.
pub fn sg_memory_upper_bound(counts: &[u64], n: usize) -> u64 {
    counts.iter().map(|&c| c.min(n as u64)).sum()
}

/// Expected minimum number of bins PoRC spreads the keys over:
/// `sum_i ceil(p_i * n / (1 + epsilon))`.
pub fn porc_memory_lower_bound(pmf: &[f64], n: usize, epsilon: f64) -> u64 {
    pmf.iter()
        .map(|&p| {
            let bins = p * n as f64 / (1.0 + epsilon);
            // Absorb rounding noise so exact integers do not ceil upward.
            (bins - 1e-9).ceil().max(0.0) as u64
        })
        .sum()
}

/// Nearest-rank latency percentiles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LatencySummary {
    pub count: u64,
    pub p50: u64,
    pub p99: u64,
    pub max: u64,
}

impl LatencySummary {
    pub fn from_unsorted(latencies: &mut [u64]) -> Self {
        if latencies.is_empty() {
            return LatencySummary::default();
        }
        latencies.sort_unstable();
        let rank = |p: f64| {
            let idx = (p * latencies.len() as f64).ceil() as usize;
            latencies[idx.clamp(1, latencies.len()) - 1]
        };
        LatencySummary {
            count: latencies.len() as u64,
            p50: rank(0.50),
            p99: rank(0.99),
            max: *latencies.last().unwrap(),
        }
    }
}

/// One sampling point of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub tick: u64,
    /// Ticks covered by this sample's interval.
    pub interval: u64,
    /// Messages assigned to each worker during the interval.
    pub interval_loads: Vec<u64>,
    /// Messages assigned to each worker since the start.
    pub cumulative_loads: Vec<u64>,
    /// Worker service rates (messages per tick) at the sampling tick.
    pub service_rates: Vec<f64>,
    pub queue_lengths: Vec<usize>,
    pub latency: LatencySummary,
    pub throughput: u64,
    pub memory_per_worker: Vec<usize>,
    pub total_memory: usize,
}

impl Sample {
    /// Per-worker utilization over the interval: assigned messages divided by
    /// what the worker could serve in that time.
    pub fn utilizations(&self) -> Vec<f64> {
        self.interval_loads
            .iter()
            .zip(&self.service_rates)
            .map(|(&l, &r)| l as f64 / (r * self.interval.max(1) as f64))
            .collect()
    }

    pub fn imbalance(&self) -> f64 {
        let u = self.utilizations();
        let max = u.iter().copied().fold(0.0, f64::max);
        (max - mean(&u)).max(0.0)
    }

    pub fn normalized_imbalance(&self) -> f64 {
        let avg = mean(&self.utilizations());
        if avg > 0.0 {
            self.imbalance() / avg
        } else {
            0.0
        }
    }

    pub fn max_queue(&self) -> usize {
        self.queue_lengths.iter().copied().max().unwrap_or(0)
    }

    pub fn row(&self) -> MetricsRow {
        let u = self.utilizations();
        MetricsRow {
            tick: self.tick,
            imbalance: sig6(self.imbalance()),
            norm_imbalance: sig6(self.normalized_imbalance()),
            max_util: sig6(u.iter().copied().fold(0.0, f64::max)),
            avg_util: sig6(mean(&u)),
            max_queue: self.max_queue() as u64,
            avg_queue: sig6(
                self.queue_lengths.iter().sum::<usize>() as f64
                    / self.queue_lengths.len().max(1) as f64,
            ),
            p50_lat: self.latency.p50,
            p99_lat: self.latency.p99,
            max_lat: self.latency.max,
            throughput: self.throughput,
            total_memory: self.total_memory as u64,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Rounds to six significant digits.
pub fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { 0.0 } else { x };
    }
    format!("{x:.5e}").parse().unwrap()
}

/// Exported columns, in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub tick: u64,
    pub imbalance: f64,
    pub norm_imbalance: f64,
    pub max_util: f64,
    pub avg_util: f64,
    pub max_queue: u64,
    pub avg_queue: f64,
    pub p50_lat: u64,
    pub p99_lat: u64,
    pub max_lat: u64,
    pub throughput: u64,
    pub total_memory: u64,
}

pub const CSV_HEADER: &str = "tick,imbalance,norm_imbalance,max_util,avg_util,max_queue,avg_queue,p50_lat,p99_lat,max_lat,throughput,total_memory";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsSeries {
    pub samples: Vec<Sample>,
}

impl MetricsSeries {
    pub fn push(&mut self, sample: Sample) {
        debug_assert!(self.samples.last().is_none_or(|s| s.tick < sample.tick));
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rows(&self) -> Vec<MetricsRow> {
        self.samples.iter().map(Sample::row).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in self.rows() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.tick,
                r.imbalance,
                r.norm_imbalance,
                r.max_util,
                r.avg_util,
                r.max_queue,
                r.avg_queue,
                r.p50_lat,
                r.p99_lat,
                r.max_lat,
                r.throughput,
                r.total_memory
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.rows()).expect("rows serialize");
        s.push('\n');
        s
    }

    pub fn export(&self, path: &Path, format: ExportFormat) -> Result<()> {
        let body = match format {
            ExportFormat::Csv => self.to_csv(),
            ExportFormat::Json => self.to_json(),
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(body.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    #[default]
    Csv,
    Json,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::validation(
                "format",
                format!("expected csv or json, got {other:?}"),
            )),
        }
    }
}
