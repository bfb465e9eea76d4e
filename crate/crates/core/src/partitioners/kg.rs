use super::{validate_bins, LoadVector, Partitioner, RouteRecord, Strategy};
use crate::error::Result;
use crate::hashing::{bucket, hash64, HashSeed};
use crate::types::Message;

/// Key grouping: `hash(key) mod n`.
#[derive(Clone, Debug)]
pub struct KeyGrouping {
    seed: HashSeed,
    loads: LoadVector,
}

impl KeyGrouping {
    pub fn new(n: usize, seed: HashSeed) -> Result<Self> {
        validate_bins(n, 1)?;
        Ok(KeyGrouping {
            seed,
            loads: LoadVector::new(n),
        })
    }

    pub fn bin_of(&self, key: &[u8]) -> usize {
        bucket(hash64(key, self.seed), self.loads.len())
    }
}

impl Partitioner for KeyGrouping {
    fn strategy(&self) -> Strategy {
        Strategy::Kg
    }

    fn loads(&self) -> &LoadVector {
        &self.loads
    }

    fn route(&mut self, msg: &Message) -> Result<RouteRecord> {
        let bin = self.bin_of(msg.key.as_bytes());
        self.loads.record(bin);
        Ok(RouteRecord {
            message_id: msg.id,
            bin,
            probes: 1,
            tick: msg.timestamp,
        })
    }
}
