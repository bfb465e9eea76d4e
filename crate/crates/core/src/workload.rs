//! Synthetic Zipf streams, trace files, and capacity schedules.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{normalize_capacities, CapacityProfile, Key, Message, WorkloadSpec};

/// Zipf probability of rank `r` (1-based) among `c` keys with exponent `z`.
pub fn zipf_pmf(r: u64, c: u64, z: f64) -> Result<f64> {
    if c == 0 || r == 0 || r > c {
        return Err(Error::validation(
            "rank",
            format!("rank {r} outside 1..={c}"),
        ));
    }
    let norm: f64 = (1..=c).map(|x| (x as f64).powf(-z)).sum();
    Ok((r as f64).powf(-z) / norm)
}

/// Inverse-CDF sampler over ranks `1..=c`.
#[derive(Clone, Debug)]
pub struct ZipfSampler {
    exponent: f64,
    cdf: Vec<f64>,
    rng: ChaCha8Rng,
}

impl ZipfSampler {
    pub fn new(c: u64, z: f64, seed: u64) -> Result<Self> {
        if c == 0 {
            return Err(Error::validation("distinct_keys", "must be at least 1"));
        }
        if !(z.is_finite() && z >= 0.0) {
            return Err(Error::validation(
                "zipf_exponent",
                format!("must be >= 0, got {z}"),
            ));
        }
        let mut cdf: Vec<f64> = Vec::with_capacity(c as usize);
        let mut acc = 0.0;
        for r in 1..=c {
            acc += (r as f64).powf(-z);
            cdf.push(acc);
        }
        for p in &mut cdf {
            *p /= acc;
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(ZipfSampler {
            exponent: z,
            cdf,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn distinct_keys(&self) -> u64 {
        self.cdf.len() as u64
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Probability of rank `r` (1-based) from the cumulative table.
    pub fn pmf(&self, r: u64) -> f64 {
        let i = (r - 1) as usize;
        if i == 0 {
            self.cdf[0]
        } else {
            self.cdf[i] - self.cdf[i - 1]
        }
    }

    /// The full probability vector, highest rank first.
    pub fn probabilities(&self) -> Vec<f64> {
        (1..=self.distinct_keys()).map(|r| self.pmf(r)).collect()
    }

    /// Draws a 1-based rank.
    pub fn sample(&mut self) -> u64 {
        let u: f64 = self.rng.gen();
        let idx = self.cdf.partition_point(|&p| p <= u);
        idx.min(self.cdf.len() - 1) as u64 + 1
    }
}

/// Routing key of a 1-based rank: rank 1 is `"0"`.
pub fn rank_key(rank: u64) -> Key {
    Key::from((rank - 1).to_string())
}

/// Materializes the stream described by `spec`.
pub fn generate_stream(spec: &WorkloadSpec) -> Result<Vec<Message>> {
    spec.validate()?;
    match spec {
        WorkloadSpec::Zipf {
            distinct_keys,
            zipf_exponent,
            message_count,
            seed,
        } => {
            let mut sampler = ZipfSampler::new(*distinct_keys, *zipf_exponent, *seed)?;
            let keys: Vec<Key> = (1..=*distinct_keys).map(rank_key).collect();
            Ok((0..*message_count)
                .map(|i| {
                    let rank = sampler.sample();
                    Message {
                        id: i,
                        key: keys[(rank - 1) as usize].clone(),
                        timestamp: i,
                    }
                })
                .collect())
        }
        WorkloadSpec::Trace { path } => read_trace(path),
    }
}

/// Reads a `timestamp,key` trace. Lines starting with `#` and blank lines are
/// skipped; ids are assigned in file order.
pub fn read_trace(path: &Path) -> Result<Vec<Message>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut stream = Vec::new();
    let mut last_ts = 0u64;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => parse_err(lineno, "line is not valid UTF-8".into()),
            _ => Error::io(path, e),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (ts, key) = line
            .split_once(',')
            .ok_or_else(|| parse_err(lineno, "expected `timestamp,key`".into()))?;
        let ts: u64 = ts
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("invalid timestamp {ts:?}")))?;
        if ts < last_ts {
            return Err(parse_err(
                lineno,
                format!("timestamp {ts} precedes previous timestamp {last_ts}"),
            ));
        }
        last_ts = ts;
        stream.push(Message {
            id: stream.len() as u64,
            key: Key::new(key),
            timestamp: ts,
        });
    }
    Ok(stream)
}

/// Writes a stream in the trace format read by [`read_trace`].
pub fn write_trace(path: &Path, stream: &[Message]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "# timestamp,key").map_err(io)?;
    for msg in stream {
        writeln!(w, "{},{}", msg.timestamp, msg.key.display()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `y` machines `zfactor` times more powerful than the remaining `n - y`.
pub fn heterogeneous_profile(n: usize, y: usize, zfactor: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    if !(zfactor.is_finite() && zfactor >= 1.0) {
        return Err(Error::validation(
            "zfactor",
            format!("must be >= 1, got {zfactor}"),
        ));
    }
    if y >= n && zfactor > 1.0 {
        return Err(Error::validation(
            "y",
            format!("{y} powerful machines leaves no slower machines among {n}"),
        ));
    }
    Ok((0..n).map(|w| if w < y { zfactor } else { 1.0 }).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityEvent {
    /// Applied once this many messages have been routed.
    pub after_messages: u64,
    pub capacities: Vec<f64>,
}

/// Initial raw capacities plus re-provisioning events. Every profile is
/// normalized, so total capacity stays constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacitySchedule {
    pub initial: Vec<f64>,
    #[serde(default)]
    pub events: Vec<CapacityEvent>,
}

impl CapacitySchedule {
    pub fn fixed(raw: Vec<f64>) -> Self {
        CapacitySchedule {
            initial: raw,
            events: Vec::new(),
        }
    }

    pub fn uniform(n: usize) -> Self {
        Self::fixed(vec![1.0; n])
    }

    pub fn with_event(mut self, after_messages: u64, capacities: Vec<f64>) -> Self {
        self.events.push(CapacityEvent {
            after_messages,
            capacities,
        });
        self
    }

    pub fn workers(&self) -> usize {
        self.initial.len()
    }

    pub fn validate(&self) -> Result<()> {
        normalize_capacities(&self.initial)?;
        let n = self.initial.len();
        let mut last: Option<u64> = None;
        for (i, ev) in self.events.iter().enumerate() {
            if last.is_some_and(|l| ev.after_messages <= l) {
                return Err(Error::validation(
                    format!("capacities.events[{i}].after_messages"),
                    "thresholds must be strictly increasing",
                ));
            }
            if ev.capacities.len() != n {
                return Err(Error::validation(
                    format!("capacities.events[{i}]"),
                    format!("expected {n} capacities, got {}", ev.capacities.len()),
                ));
            }
            normalize_capacities(&ev.capacities)?;
            last = Some(ev.after_messages);
        }
        Ok(())
    }

    pub fn initial_profile(&self) -> Result<CapacityProfile> {
        normalize_capacities(&self.initial)
    }

    /// Normalized profiles in order, each paired with its activation threshold.
    pub fn profiles(&self) -> Result<Vec<(u64, CapacityProfile)>> {
        let mut out = vec![(0, self.initial_profile()?)];
        for ev in &self.events {
            out.push((ev.after_messages, normalize_capacities(&ev.capacities)?));
        }
        Ok(out)
    }
}
