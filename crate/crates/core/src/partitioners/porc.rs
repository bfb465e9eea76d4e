use super::{validate_bins, validate_epsilon, LoadVector, Partitioner, RouteRecord, Strategy};
use crate::error::{Error, Result};
use crate::hashing::{salted_bucket, HashSeed};
use crate::types::Message;

/// Probe cap, in multiples of the bin count.
pub const PROBE_BOUND_FACTOR: u64 = 64;

/// Source of a key's candidate bins: salt 1 is the principal bin, salts
/// 2, 3, ... the fallbacks.
pub trait ProbeSequence: Send {
    fn probe(&mut self, key: &[u8], salt: u64, n: usize) -> usize;
}

/// Probe sequence from one seeded hash of `key || salt`.
#[derive(Clone, Debug)]
pub struct SaltedHash {
    seed: HashSeed,
    scratch: Vec<u8>,
}

impl SaltedHash {
    pub fn new(seed: HashSeed) -> Self {
        SaltedHash {
            seed,
            scratch: Vec::with_capacity(32),
        }
    }
}

impl ProbeSequence for SaltedHash {
    #[inline]
    fn probe(&mut self, key: &[u8], salt: u64, n: usize) -> usize {
        salted_bucket(&mut self.scratch, key, salt, n, self.seed)
    }
}

/// Power of random choices: each key walks its probe sequence and lands on the
/// first bin whose load is below `(1 + epsilon)` times the average.
#[derive(Clone, Debug)]
pub struct PowerOfRandomChoices<P = SaltedHash> {
    epsilon: f64,
    probes: P,
    loads: LoadVector,
}

impl PowerOfRandomChoices<SaltedHash> {
    pub fn new(n: usize, epsilon: f64, seed: HashSeed) -> Result<Self> {
        Self::with_probes(n, epsilon, SaltedHash::new(seed))
    }
}

impl<P: ProbeSequence> PowerOfRandomChoices<P> {
    pub fn with_probes(n: usize, epsilon: f64, probes: P) -> Result<Self> {
        validate_bins(n, 1)?;
        validate_epsilon(epsilon)?;
        Ok(PowerOfRandomChoices {
            epsilon,
            probes,
            loads: LoadVector::new(n),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The bin salt 1 maps `key` to.
    pub fn principal(&mut self, key: &[u8]) -> usize {
        self.probes.probe(key, 1, self.loads.len())
    }

    /// Routes one key and returns `(bin, salt_used)`.
    pub fn route_key(&mut self, key: &[u8]) -> Result<(usize, u64)> {
        let n = self.loads.len();
        let capacity = self.loads.capacity(self.epsilon);
        let bound = PROBE_BOUND_FACTOR * n as u64;
        for salt in 1..=bound {
            let bin = self.probes.probe(key, salt, n);
            if (self.loads.get(bin) as f64) < capacity {
                self.loads.record(bin);
                return Ok((bin, salt));
            }
        }
        Err(Error::ProbeBoundExceeded {
            probes: bound,
            bins: n,
        })
    }
}

impl<P: ProbeSequence> Partitioner for PowerOfRandomChoices<P> {
    fn strategy(&self) -> Strategy {
        Strategy::Porc
    }

    fn loads(&self) -> &LoadVector {
        &self.loads
    }

    fn route(&mut self, msg: &Message) -> Result<RouteRecord> {
        let (bin, salt) = self.route_key(msg.key.as_bytes())?;
        Ok(RouteRecord {
            message_id: msg.id,
            bin,
            probes: salt,
            tick: msg.timestamp,
        })
    }
}
