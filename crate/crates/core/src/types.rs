//! Domain types shared by every module: messages, keys, capacity profiles,
//! delegation signals and workload descriptions.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a normalized capacity profile.
pub const CAPACITY_SUM_TOLERANCE: f64 = 1e-9;

/// Opaque routing key. Cloning is cheap; identical keys produced by the
/// workload generator share one allocation.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key(Arc<[u8]>);

impl Key {
    pub fn new(bytes: impl AsRef<[u8]>) -> Self {
        Key(Arc::from(bytes.as_ref()))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// Lossy UTF-8 rendering used by CSV exports.
    pub fn display(&self) -> std::borrow::Cow<'_, str> {
        String::from_utf8_lossy(&self.0)
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Key({:?})", self.display())
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display())
    }
}

impl From<&str> for Key {
    fn from(s: &str) -> Self {
        Key::new(s)
    }
}

impl From<String> for Key {
    fn from(s: String) -> Self {
        Key::new(s)
    }
}

impl AsRef<[u8]> for Key {
    fn as_ref(&self) -> &[u8] {
        self.as_bytes()
    }
}

/// One stream event. Payloads are not modeled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub id: u64,
    pub key: Key,
    pub timestamp: u64,
}

impl Message {
    pub fn new(id: u64, key: impl Into<Key>, timestamp: u64) -> Self {
        Message {
            id,
            key: key.into(),
            timestamp,
        }
    }
}

/// Per-worker capacities, normalized so they sum to one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CapacityProfile {
    capacities: Vec<f64>,
}

impl CapacityProfile {
    pub fn uniform(n: usize) -> Result<Self> {
        normalize_capacities(&vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.capacities
    }

    pub fn len(&self) -> usize {
        self.capacities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacities.is_empty()
    }

    pub fn get(&self, worker: usize) -> f64 {
        self.capacities[worker]
    }
}

impl std::ops::Index<usize> for CapacityProfile {
    type Output = f64;

    fn index(&self, worker: usize) -> &f64 {
        &self.capacities[worker]
    }
}

/// Scales raw capacities so that they sum to one, preserving order.
pub fn normalize_capacities(raw: &[f64]) -> Result<CapacityProfile> {
    if raw.is_empty() {
        return Err(Error::validation(
            "capacities",
            "at least one worker is required",
        ));
    }
    for (i, &c) in raw.iter().enumerate() {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::validation(
                format!("capacities[{i}]"),
                format!("capacity must be positive and finite, got {c}"),
            ));
        }
    }
    let total: f64 = raw.iter().sum();
    let capacities: Vec<f64> = raw.iter().map(|c| c / total).collect();
    debug_assert!((capacities.iter().sum::<f64>() - 1.0).abs() <= CAPACITY_SUM_TOLERANCE);
    Ok(CapacityProfile { capacities })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignalKind {
    IncreaseWorkload,
    DecreaseWorkload,
}

/// Binary workload signal from a worker to the sources.
///
/// `observed_loads` carries the trailing-window message counts the worker saw
/// for each virtual worker it served. Sources pick the virtual worker to move
/// off a busy worker from these counts, so every source makes the same choice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signal {
    pub worker: usize,
    pub kind: SignalKind,
    pub issued_at: u64,
    pub observed_loads: Vec<(usize, u64)>,
}

impl Signal {
    pub fn new(worker: usize, kind: SignalKind, issued_at: u64) -> Self {
        Signal {
            worker,
            kind,
            issued_at,
            observed_loads: Vec::new(),
        }
    }

    pub fn with_observed_loads(mut self, loads: Vec<(usize, u64)>) -> Self {
        self.observed_loads = loads;
        self
    }
}

/// Where a run's messages come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WorkloadSpec {
    Zipf {
        distinct_keys: u64,
        zipf_exponent: f64,
        message_count: u64,
        #[serde(default)]
        seed: u64,
    },
    Trace {
        path: PathBuf,
    },
}

impl WorkloadSpec {
    pub fn zipf(distinct_keys: u64, zipf_exponent: f64, message_count: u64, seed: u64) -> Self {
        WorkloadSpec::Zipf {
            distinct_keys,
            zipf_exponent,
            message_count,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WorkloadSpec::Zipf {
                distinct_keys,
                zipf_exponent,
                ..
            } => {
                if *distinct_keys < 1 {
                    return Err(Error::validation("distinct_keys", "must be at least 1"));
                }
                if !(zipf_exponent.is_finite() && *zipf_exponent >= 0.0) {
                    return Err(Error::validation(
                        "zipf_exponent",
                        format!("must be a finite value >= 0, got {zipf_exponent}"),
                    ));
                }
                Ok(())
            }
            WorkloadSpec::Trace { .. } => Ok(()),
        }
    }

    pub fn with_seed(mut self, new_seed: u64) -> Self {
        if let WorkloadSpec::Zipf { seed, .. } = &mut self {
            *seed = new_seed;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_profile() {
        let p = normalize_capacities(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(p.as_slice(), &[0.25; 4]);
    }

    #[test]
    fn one_powerful_machine() {
        let mut raw = vec![1.0; 10];
        raw[0] = 5.0;
        let p = normalize_capacities(&raw).unwrap();
        assert!((p[0] - 5.0 / 14.0).abs() < 1e-15);
        for w in 1..10 {
            assert!((p[w] - 1.0 / 14.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_worker() {
        assert_eq!(normalize_capacities(&[2.0]).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn rejects_empty_and_non_positive() {
        assert!(normalize_capacities(&[]).unwrap_err().is_validation());
        let err = normalize_capacities(&[1.0, 0.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains("capacities[1]"), "{err}");
        let err = normalize_capacities(&[1.0, 2.0, -3.0]).unwrap_err();
        assert!(err.to_string().contains("capacities[2]"), "{err}");
    }

    #[test]
    fn workload_validation() {
        assert!(WorkloadSpec::zipf(0, 1.0, 10, 0).validate().is_err());
        assert!(WorkloadSpec::zipf(10, 1.0, 0, 0).validate().is_ok());
        assert!(WorkloadSpec::zipf(10, -1.0, 10, 0).validate().is_err());
        assert!(WorkloadSpec::zipf(10, 0.0, 10, 0).validate().is_ok());
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(raw in prop::collection::vec(1e-3f64..1e3, 1..50)) {
            let once = normalize_capacities(&raw).unwrap();
            let twice = normalize_capacities(once.as_slice()).unwrap();
            prop_assert!((once.as_slice().iter().sum::<f64>() - 1.0).abs() <= CAPACITY_SUM_TOLERANCE);
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn normalization_is_scale_invariant(
            raw in prop::collection::vec(1e-3f64..1e3, 1..50),
            scale in 1e-3f64..1e3,
        ) {
            let base = normalize_capacities(&raw).unwrap();
            let scaled: Vec<f64> = raw.iter().map(|c| c * scale).collect();
            let scaled = normalize_capacities(&scaled).unwrap();
            for (a, b) in base.as_slice().iter().zip(scaled.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
