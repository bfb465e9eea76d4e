use std::collections::HashSet;

use crate::types::Key;

/// Distinct keys per bin and their sum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryFootprint {
    pub per_bin: Vec<usize>,
    pub total: usize,
}

/// Incrementally tracks which keys each bin has ever received.
#[derive(Clone, Debug, Default)]
pub struct MemoryTracker {
    bins: Vec<HashSet<Key>>,
    total: usize,
}

impl MemoryTracker {
    pub fn new(n: usize) -> Self {
        MemoryTracker {
            bins: vec![HashSet::new(); n],
            total: 0,
        }
    }

    #[inline]
    pub fn observe(&mut self, bin: usize, key: &Key) {
        if !self.bins[bin].contains(key) {
            self.bins[bin].insert(key.clone());
            self.total += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn footprint(&self) -> MemoryFootprint {
        MemoryFootprint {
            per_bin: self.bins.iter().map(HashSet::len).collect(),
            total: self.total,
        }
    }
}

/// Memory footprint of a routing log given as `(key, bin)` pairs.
pub fn memory_footprint<'a>(
    n: usize,
    log: impl IntoIterator<Item = (&'a Key, usize)>,
) -> MemoryFootprint {
    let mut tracker = MemoryTracker::new(n);
    for (key, bin) in log {
        tracker.observe(bin, key);
    }
    tracker.footprint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::HashSeed;
    use crate::partitioners::{route_all, KeyGrouping};
    use crate::types::Message;

    #[test]
    fn kg_counts_each_key_once() {
        let stream: Vec<Message> = ["A", "A", "B"]
            .iter()
            .enumerate()
            .map(|(i, k)| Message::new(i as u64, *k, i as u64))
            .collect();
        let mut kg = KeyGrouping::new(2, HashSeed(0)).unwrap();
        let recs = route_all(&mut kg, &stream).unwrap();
        let fp = memory_footprint(2, stream.iter().zip(&recs).map(|(m, r)| (&m.key, r.bin)));
        assert_eq!(fp.total, 2);
        assert_eq!(fp.per_bin.iter().sum::<usize>(), 2);
    }
}
