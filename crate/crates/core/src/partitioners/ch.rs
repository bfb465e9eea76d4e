use super::{validate_bins, validate_epsilon, LoadVector, Partitioner, RouteRecord, Strategy};
use crate::error::Result;
use crate::hashing::{unit_circle, HashSeed};
use crate::types::Message;

/// Consistent hashing with bounded loads. Each bin sits once on the unit
/// circle; a key starts at the first bin clockwise of its own position and
/// walks on until it finds a bin below `(1 + epsilon)` times the average load.
#[derive(Clone, Debug)]
pub struct BoundedLoadRing {
    epsilon: f64,
    seed: HashSeed,
    /// `(position, bin)` sorted by position.
    ring: Vec<(f64, usize)>,
    loads: LoadVector,
}

pub(crate) fn bin_label(bin: usize) -> [u8; 12] {
    let mut label = [0u8; 12];
    label[..4].copy_from_slice(b"bin:");
    label[4..].copy_from_slice(&(bin as u64).to_le_bytes());
    label
}

impl BoundedLoadRing {
    pub fn new(n: usize, epsilon: f64, seed: HashSeed) -> Result<Self> {
        validate_bins(n, 1)?;
        validate_epsilon(epsilon)?;
        let mut ring: Vec<(f64, usize)> = (0..n)
            .map(|bin| (unit_circle(&bin_label(bin), seed), bin))
            .collect();
        ring.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(BoundedLoadRing {
            epsilon,
            seed,
            ring,
            loads: LoadVector::new(n),
        })
    }

    pub fn ring(&self) -> &[(f64, usize)] {
        &self.ring
    }

    /// Index into the ring of the first position at or after `key`'s.
    pub fn start_index(&self, key: &[u8]) -> usize {
        let pos = unit_circle(key, self.seed);
        self.ring.partition_point(|&(p, _)| p < pos) % self.ring.len()
    }

    /// Routes one key and returns `(bin, positions visited)`.
    pub fn route_key(&mut self, key: &[u8]) -> (usize, u64) {
        let n = self.ring.len();
        let capacity = self.loads.capacity(self.epsilon);
        let start = self.start_index(key);
        for step in 0..n {
            let bin = self.ring[(start + step) % n].1;
            if (self.loads.get(bin) as f64) < capacity {
                self.loads.record(bin);
                return (bin, step as u64 + 1);
            }
        }
        // Some bin always holds at most the average load, which is below capacity.
        unreachable!("bounded-load ring walk found no bin below capacity")
    }
}

impl Partitioner for BoundedLoadRing {
    fn strategy(&self) -> Strategy {
        Strategy::Ch
    }

    fn loads(&self) -> &LoadVector {
        &self.loads
    }

    fn route(&mut self, msg: &Message) -> Result<RouteRecord> {
        let (bin, probes) = self.route_key(msg.key.as_bytes());
        Ok(RouteRecord {
            message_id: msg.id,
            bin,
            probes,
            tick: msg.timestamp,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_is_strictly_increasing() {
        let ch = BoundedLoadRing::new(200, 0.1, HashSeed(2)).unwrap();
        assert!(ch.ring().windows(2).all(|w| w[0].0 < w[1].0));
        assert!(ch.ring().iter().all(|&(p, _)| (0.0..1.0).contains(&p)));
    }

    #[test]
    fn single_bin() {
        let mut ch = BoundedLoadRing::new(1, 0.0, HashSeed(2)).unwrap();
        for i in 0..50 {
            assert_eq!(ch.route_key(i.to_string().as_bytes()), (0, 1));
        }
    }

    #[test]
    fn large_epsilon_is_plain_consistent_hashing() {
        let n = 8;
        let mut ch = BoundedLoadRing::new(n, (n - 1) as f64, HashSeed(6)).unwrap();
        for i in 0..10_000u64 {
            let key = (i % 3).to_string();
            let first = ch.ring()[ch.start_index(key.as_bytes())].1;
            assert_eq!(ch.route_key(key.as_bytes()), (first, 1));
        }
    }

    #[test]
    fn hot_key_walks_clockwise() {
        let mut ch = BoundedLoadRing::new(4, 0.0, HashSeed(6)).unwrap();
        let start = ch.start_index(b"hot");
        let order: Vec<usize> = (0..4).map(|i| ch.ring()[(start + i) % 4].1).collect();
        let got: Vec<usize> = (0..4).map(|_| ch.route_key(b"hot").0).collect();
        assert_eq!(got, order);
    }
}
