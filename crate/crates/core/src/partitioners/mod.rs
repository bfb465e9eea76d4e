//! Routing strategies that map each message to one of `n` bins.
//!
//! Every strategy implements [`Partitioner`]: routing a message increments the
//! chosen bin's load and the routed total. When driven by consistent grouping
//! a bin is a virtual worker; standalone it is a physical worker.

mod ch;
mod kg;
mod memory;
mod pkg;
mod porc;
mod potc;
mod sg;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::HashSeed;
use crate::types::Message;

pub use ch::BoundedLoadRing;
pub use kg::KeyGrouping;
pub use memory::{memory_footprint, MemoryFootprint, MemoryTracker};
pub use pkg::PartialKeyGrouping;
pub use porc::{PowerOfRandomChoices, ProbeSequence, SaltedHash};
pub use potc::PowerOfTwoChoices;
pub use sg::ShuffleGrouping;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Kg,
    Sg,
    Pkg,
    Potc,
    Porc,
    Ch,
    Cg,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Kg,
        Strategy::Sg,
        Strategy::Pkg,
        Strategy::Potc,
        Strategy::Porc,
        Strategy::Ch,
        Strategy::Cg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Kg => "kg",
            Strategy::Sg => "sg",
            Strategy::Pkg => "pkg",
            Strategy::Potc => "potc",
            Strategy::Porc => "porc",
            Strategy::Ch => "ch",
            Strategy::Cg => "cg",
        }
    }

    /// Whether the strategy reads the `epsilon` parameter.
    pub fn uses_epsilon(self) -> bool {
        matches!(self, Strategy::Porc | Strategy::Ch | Strategy::Cg)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::validation(
                    "strategy",
                    format!("unknown strategy {s:?} (expected kg, sg, pkg, potc, porc, ch or cg)"),
                )
            })
    }
}

/// One routing decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RouteRecord {
    pub message_id: u64,
    pub bin: usize,
    /// Salt that found the bin (PoRC), ring positions visited (CH), or 1.
    pub probes: u64,
    pub tick: u64,
}

/// Per-bin message counts plus the running total.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadVector {
    load: Vec<u64>,
    total: u64,
}

impl LoadVector {
    pub fn new(n: usize) -> Self {
        LoadVector {
            load: vec![0; n],
            total: 0,
        }
    }

    pub fn from_loads(load: Vec<u64>) -> Self {
        let total = load.iter().sum();
        LoadVector { load, total }
    }

    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.load
    }

    #[inline]
    pub fn get(&self, bin: usize) -> u64 {
        self.load[bin]
    }

    #[inline]
    pub fn record(&mut self, bin: usize) {
        self.load[bin] += 1;
        self.total += 1;
    }

    /// Bounded-load capacity `(1 + epsilon) * (m_t + 1) / n`, where `m_t` counts
    /// messages routed before the arriving one.
    #[inline]
    pub fn capacity(&self, epsilon: f64) -> f64 {
        (1.0 + epsilon) * (self.total + 1) as f64 / self.load.len() as f64
    }

    /// The less loaded of two bins; ties go to the smaller index.
    #[inline]
    pub(crate) fn lesser(&self, a: usize, b: usize) -> usize {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if self.load[hi] < self.load[lo] {
            hi
        } else {
            lo
        }
    }
}

pub trait Partitioner: Send {
    fn strategy(&self) -> Strategy;

    fn loads(&self) -> &LoadVector;

    fn route(&mut self, msg: &Message) -> Result<RouteRecord>;

    fn bins(&self) -> usize {
        self.loads().len()
    }
}

/// Parameters shared by the standalone strategies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionerParams {
    pub epsilon: f64,
    pub seed: HashSeed,
}

impl Default for PartitionerParams {
    fn default() -> Self {
        PartitionerParams {
            epsilon: 0.01,
            seed: HashSeed::default(),
        }
    }
}

pub(crate) fn validate_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            "epsilon",
            format!("must be a finite value >= 0, got {epsilon}"),
        ))
    }
}

pub(crate) fn validate_bins(n: usize, min: usize) -> Result<()> {
    if n >= min {
        Ok(())
    } else {
        Err(Error::validation(
            "n",
            format!("needs at least {min} bins, got {n}"),
        ))
    }
}

/// Builds a standalone partitioner over `n` bins. Consistent grouping is not a
/// standalone strategy; see [`crate::cg`].
pub fn build(
    strategy: Strategy,
    n: usize,
    params: PartitionerParams,
) -> Result<Box<dyn Partitioner>> {
    Ok(match strategy {
        Strategy::Kg => Box::new(KeyGrouping::new(n, params.seed)?),
        Strategy::Sg => Box::new(ShuffleGrouping::new(n)?),
        Strategy::Pkg => Box::new(PartialKeyGrouping::new(n, params.seed)?),
        Strategy::Potc => Box::new(PowerOfTwoChoices::new(n, params.seed)?),
        Strategy::Porc => Box::new(PowerOfRandomChoices::new(n, params.epsilon, params.seed)?),
        Strategy::Ch => Box::new(BoundedLoadRing::new(n, params.epsilon, params.seed)?),
        Strategy::Cg => {
            return Err(Error::validation(
                "strategy",
                "cg needs a virtual-worker table; use cg::CgRouter",
            ))
        }
    })
}

/// Routes a whole stream, returning one record per message.
pub fn route_all(
    partitioner: &mut dyn Partitioner,
    stream: &[Message],
) -> Result<Vec<RouteRecord>> {
    stream.iter().map(|m| partitioner.route(m)).collect()
}

/// Writes `message_id,key,bin,salt_or_probes,tick` rows.
pub fn write_routing_log(path: &Path, stream: &[Message], records: &[RouteRecord]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["message_id", "key", "bin", "salt_or_probes", "tick"])
        .map_err(csv_err)?;
    for (msg, rec) in stream.iter().zip(records) {
        w.write_record([
            rec.message_id.to_string(),
            msg.key.display().into_owned(),
            rec.bin.to_string(),
            rec.probes.to_string(),
            rec.tick.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
