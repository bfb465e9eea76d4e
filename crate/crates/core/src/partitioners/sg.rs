use super::{validate_bins, LoadVector, Partitioner, RouteRecord, Strategy};
use crate::error::Result;
use crate::types::Message;

/// Shuffle grouping: key-oblivious round robin.
#[derive(Clone, Debug)]
pub struct ShuffleGrouping {
    cursor: usize,
    loads: LoadVector,
}

impl ShuffleGrouping {
    pub fn new(n: usize) -> Result<Self> {
        validate_bins(n, 1)?;
        Ok(ShuffleGrouping {
            cursor: 0,
            loads: LoadVector::new(n),
        })
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }
}

impl Partitioner for ShuffleGrouping {
    fn strategy(&self) -> Strategy {
        Strategy::Sg
    }

    fn loads(&self) -> &LoadVector {
        &self.loads
    }

    fn route(&mut self, msg: &Message) -> Result<RouteRecord> {
        let bin = self.cursor;
        self.cursor = (self.cursor + 1) % self.loads.len();
        self.loads.record(bin);
        Ok(RouteRecord {
            message_id: msg.id,
            bin,
            probes: 1,
            tick: msg.timestamp,
        })
    }
}
