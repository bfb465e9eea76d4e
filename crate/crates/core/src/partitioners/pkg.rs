use super::{validate_bins, LoadVector, Partitioner, RouteRecord, Strategy};
use crate::error::Result;
use crate::hashing::{bucket, hash64, HashSeed};
use crate::types::Message;

/// Partial key grouping: each key has two hashed candidates and goes to the
/// less loaded one.
#[derive(Clone, Debug)]
pub struct PartialKeyGrouping {
    first: HashSeed,
    second: HashSeed,
    loads: LoadVector,
}

impl PartialKeyGrouping {
    pub fn new(n: usize, seed: HashSeed) -> Result<Self> {
        validate_bins(n, 2)?;
        Ok(PartialKeyGrouping {
            first: seed,
            second: seed.derive(HashSeed::PKG_SECOND),
            loads: LoadVector::new(n),
        })
    }

    /// Builds the router with pre-existing loads.
    pub fn with_loads(loads: Vec<u64>, seed: HashSeed) -> Result<Self> {
        let mut pkg = Self::new(loads.len(), seed)?;
        pkg.loads = LoadVector::from_loads(loads);
        Ok(pkg)
    }

    pub fn candidates(&self, key: &[u8]) -> (usize, usize) {
        let n = self.loads.len();
        (
            bucket(hash64(key, self.first), n),
            bucket(hash64(key, self.second), n),
        )
    }
}

impl Partitioner for PartialKeyGrouping {
    fn strategy(&self) -> Strategy {
        Strategy::Pkg
    }

    fn loads(&self) -> &LoadVector {
        &self.loads
    }

    fn route(&mut self, msg: &Message) -> Result<RouteRecord> {
        let (a, b) = self.candidates(msg.key.as_bytes());
        let bin = self.loads.lesser(a, b);
        self.loads.record(bin);
        Ok(RouteRecord {
            message_id: msg.id,
            bin,
            probes: 1,
            tick: msg.timestamp,
        })
    }
}
