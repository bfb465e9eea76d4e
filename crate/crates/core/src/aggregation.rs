//! Per-worker partial state and its periodic reconciliation: exact per-key
//! counts, and SpaceSaving heavy-hitter summaries that merge across workers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::Key;

/// Counts a worker accumulated since the last aggregation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialCounts {
    pub worker: usize,
    pub counts: HashMap<Key, u64>,
}

impl PartialCounts {
    pub fn new(worker: usize) -> Self {
        PartialCounts {
            worker,
            counts: HashMap::new(),
        }
    }

    pub fn add(&mut self, key: &Key) {
        *self.counts.entry(key.clone()).or_insert(0) += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn clear(&mut self) {
        self.counts.clear();
    }
}

/// Pointwise sum of partial counts.
pub fn aggregate<'a>(partials: impl IntoIterator<Item = &'a PartialCounts>) -> BTreeMap<Key, u64> {
    let mut out = BTreeMap::new();
    for p in partials {
        for (k, &c) in &p.counts {
            *out.entry(k.clone()).or_insert(0) += c;
        }
    }
    out
}

/// Drains worker partials at intervals into a running total.
#[derive(Clone, Debug, Default)]
pub struct Aggregator {
    totals: BTreeMap<Key, u64>,
    /// Messages folded in by each aggregation round.
    rounds: Vec<u64>,
}

impl Aggregator {
    pub fn collect(&mut self, partials: &mut [PartialCounts]) {
        let mut round = 0;
        for (k, c) in aggregate(partials.iter()) {
            round += c;
            *self.totals.entry(k).or_insert(0) += c;
        }
        for p in partials.iter_mut() {
            p.clear();
        }
        self.rounds.push(round);
    }

    pub fn totals(&self) -> &BTreeMap<Key, u64> {
        &self.totals
    }

    pub fn rounds(&self) -> &[u64] {
        &self.rounds
    }
}

/// Bounded frequency summary. Counts never underestimate; each entry's
/// `error` bounds its overestimate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpaceSavingSummary {
    capacity: usize,
    entries: HashMap<Key, (u64, u64)>,
    /// `(count, key)` for finding the eviction victim.
    order: BTreeSet<(u64, Key)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeavyHitter {
    pub key: Key,
    pub count: u64,
    pub error: u64,
}

impl SpaceSavingSummary {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::validation(
                "k",
                "summary capacity must be at least 1",
            ));
        }
        Ok(SpaceSavingSummary {
            capacity,
            entries: HashMap::new(),
            order: BTreeSet::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &Key) -> Option<(u64, u64)> {
        self.entries.get(key).copied()
    }

    /// Summary error: the minimum tracked count once full, else zero.
    pub fn delta(&self) -> u64 {
        if self.entries.len() < self.capacity {
            0
        } else {
            self.order.first().map_or(0, |(c, _)| *c)
        }
    }

    fn set(&mut self, key: Key, count: u64, error: u64) {
        if let Some((old, _)) = self.entries.insert(key.clone(), (count, error)) {
            self.order.remove(&(old, key.clone()));
        }
        self.order.insert((count, key));
    }

    pub fn insert(&mut self, key: &Key) {
        if let Some(&(count, error)) = self.entries.get(key) {
            self.set(key.clone(), count + 1, error);
        } else if self.entries.len() < self.capacity {
            self.set(key.clone(), 1, 0);
        } else {
            // Smallest count, then lexicographically smallest key.
            let (min, victim) = self.order.pop_first().expect("full summary");
            self.entries.remove(&victim);
            self.set(key.clone(), min + 1, min);
        }
    }

    /// Entries by count descending, key ascending.
    pub fn ranked(&self) -> Vec<HeavyHitter> {
        let mut v: Vec<HeavyHitter> = self
            .entries
            .iter()
            .map(|(k, &(count, error))| HeavyHitter {
                key: k.clone(),
                count,
                error,
            })
            .collect();
        v.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.key.cmp(&b.key)));
        v
    }
}

/// Top `j` entries by estimated count.
pub fn heavy_hitters(summary: &SpaceSavingSummary, j: usize) -> Vec<HeavyHitter> {
    let mut v = summary.ranked();
    v.truncate(j);
    v
}

/// Result of merging per-worker summaries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergedSummary {
    pub summary: SpaceSavingSummary,
    /// Largest count dropped when truncating to `k` entries.
    pub merge_error: u64,
    /// `delta()` of every input summary.
    pub input_deltas: Vec<u64>,
    bounds: HashMap<Key, u64>,
}

impl MergedSummary {
    /// Worst-case `|estimate - true|` for a merged key: the overcount carried by
    /// summaries that tracked it, the undercount from those that did not, and
    /// the merge truncation.
    pub fn error_bound(&self, key: &Key) -> Option<u64> {
        self.bounds.get(key).copied()
    }

    /// `merge_error + sum(input_deltas)`, valid for every key.
    pub fn global_bound(&self) -> u64 {
        self.merge_error + self.input_deltas.iter().sum::<u64>()
    }
}

pub fn ss_merge(summaries: &[SpaceSavingSummary], k: usize) -> Result<MergedSummary> {
    let mut merged: HashMap<Key, (u64, u64, u64)> = HashMap::new();
    let deltas: Vec<u64> = summaries.iter().map(SpaceSavingSummary::delta).collect();
    let delta_sum: u64 = deltas.iter().sum();
    for (s, &delta) in summaries.iter().zip(&deltas) {
        for (key, &(count, error)) in &s.entries {
            let e = merged.entry(key.clone()).or_insert((0, 0, 0));
            e.0 += count;
            e.1 += error;
            e.2 += delta;
        }
    }
    let mut ranked: Vec<(Key, (u64, u64, u64))> = merged.into_iter().collect();
    ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then_with(|| a.0.cmp(&b.0)));
    let merge_error = ranked.get(k).map_or(0, |(_, (c, _, _))| *c);
    ranked.truncate(k);

    let mut out = SpaceSavingSummary::new(k)?;
    let mut bounds = HashMap::new();
    for (key, (count, error, tracked_delta)) in ranked {
        let untracked = delta_sum - tracked_delta;
        bounds.insert(key.clone(), error + untracked + merge_error);
        out.set(key, count, error);
    }
    Ok(MergedSummary {
        summary: out,
        merge_error,
        input_deltas: deltas,
        bounds,
    })
}

/// One SpaceSaving summary per worker, fed with the messages each worker was
/// assigned. `bins[i]` is the worker of `stream[i]`.
pub fn worker_summaries(
    stream: &[crate::types::Message],
    bins: &[usize],
    n: usize,
    k: usize,
) -> Result<Vec<SpaceSavingSummary>> {
    if stream.len() != bins.len() {
        return Err(Error::validation(
            "bins",
            format!("{} assignments for {} messages", bins.len(), stream.len()),
        ));
    }
    let mut out = (0..n)
        .map(|_| SpaceSavingSummary::new(k))
        .collect::<Result<Vec<_>>>()?;
    for (msg, &bin) in stream.iter().zip(bins) {
        let s = out.get_mut(bin).ok_or_else(|| {
            Error::validation("bins", format!("worker {bin} out of range for n={n}"))
        })?;
        s.insert(&msg.key);
    }
    Ok(out)
}

/// Writes `rank,key,estimate,error_bound,true_count`; `true_count` is left
/// empty when no oracle is given.
pub fn write_heavy_hitters_report(
    path: &Path,
    merged: &MergedSummary,
    j: usize,
    truth: Option<&HashMap<Key, u64>>,
) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["rank", "key", "estimate", "error_bound", "true_count"])
        .map_err(csv_err)?;
    for (rank, hh) in heavy_hitters(&merged.summary, j).into_iter().enumerate() {
        let truth = truth
            .map(|t| t.get(&hh.key).copied().unwrap_or(0).to_string())
            .unwrap_or_default();
        w.write_record([
            (rank + 1).to_string(),
            hh.key.to_string(),
            hh.count.to_string(),
            merged.error_bound(&hh.key).unwrap_or(0).to_string(),
            truth,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
