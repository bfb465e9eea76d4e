use super::{validate_bins, LoadVector, Partitioner, RouteRecord, Strategy};
use crate::error::Result;
use crate::hashing::{bucket, hash64, HashSeed};
use crate::types::Message;

/// Power of two choices: the two candidates are hashed from the message id,
/// so a single key can reach every bin.
#[derive(Clone, Debug)]
pub struct PowerOfTwoChoices {
    first: HashSeed,
    second: HashSeed,
    loads: LoadVector,
}

impl PowerOfTwoChoices {
    pub fn new(n: usize, seed: HashSeed) -> Result<Self> {
        validate_bins(n, 2)?;
        Ok(PowerOfTwoChoices {
            first: seed.derive(HashSeed::POTC_FIRST),
            second: seed.derive(HashSeed::POTC_SECOND),
            loads: LoadVector::new(n),
        })
    }

    pub fn candidates(&self, message_id: u64) -> (usize, usize) {
        let id = message_id.to_le_bytes();
        let n = self.loads.len();
        (
            bucket(hash64(&id, self.first), n),
            bucket(hash64(&id, self.second), n),
        )
    }
}

impl Partitioner for PowerOfTwoChoices {
    fn strategy(&self) -> Strategy {
        Strategy::Potc
    }

    fn loads(&self) -> &LoadVector {
        &self.loads
    }

    fn route(&mut self, msg: &Message) -> Result<RouteRecord> {
        let (a, b) = self.candidates(msg.id);
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
