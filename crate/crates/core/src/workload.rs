//! Synthetic request streams: uniform, hot-set skewed, or Zipf.
//!
//! The skewed distribution is a two-tier hot set: with probability
//! `hot_access_fraction` a request picks uniformly among the first
//! `⌈hot_fraction × key_count⌉` keys, otherwise uniformly among the rest.
//! A Zipf curve is available as an opt-in alternative.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::StoredValue;
use crate::model::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Uniform,
    #[default]
    Skewed,
    Zipf,
}

impl std::str::FromStr for Distribution {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "skewed" => Ok(Distribution::Skewed),
            "zipf" => Ok(Distribution::Zipf),
            other => Err(WorkloadError::Invalid(format!("unknown distribution {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub total_requests: usize,
    /// Percentage of reads, 50 to 100.
    pub read_percent: u32,
    pub distribution: Distribution,
    pub key_count: usize,
    pub hot_fraction: f64,
    pub hot_access_fraction: f64,
    /// Only used by [`Distribution::Zipf`].
    pub zipf_exponent: f64,
    /// Nodes issuing requests, round-robin. Empty means "let the harness pick".
    pub origin_nodes: Vec<NodeId>,
    pub seed: u64,
    pub value_size: usize,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            total_requests: 100_000,
            read_percent: 100,
            distribution: Distribution::Skewed,
            key_count: 10_000,
            hot_fraction: 0.10,
            hot_access_fraction: 0.90,
            zipf_exponent: 0.99,
            origin_nodes: Vec::new(),
            seed: 0,
            value_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },
    #[error("trace i/o: {0}")]
    Io(String),
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::Invalid(m));
        if !(50..=100).contains(&self.read_percent) {
            return bad(format!("readPercent must be in [50, 100], got {}", self.read_percent));
        }
        if self.key_count == 0 {
            return bad("keyCount must be positive".into());
        }
        if !(self.hot_fraction > 0.0 && self.hot_fraction < 1.0) {
            return bad(format!("hotFraction must be in (0, 1), got {}", self.hot_fraction));
        }
        if !(self.hot_access_fraction > 0.0 && self.hot_access_fraction < 1.0) {
            return bad(format!(
                "hotAccessFraction must be in (0, 1), got {}",
                self.hot_access_fraction
            ));
        }
        if self.distribution == Distribution::Skewed && self.hot_key_count() >= self.key_count {
            return bad(format!(
                "skewed workload needs a cold set; {} keys are all hot",
                self.key_count
            ));
        }
        if self.distribution == Distribution::Zipf && (self.zipf_exponent.is_nan() || self.zipf_exponent <= 0.0) {
            return bad("zipfExponent must be positive".into());
        }
        if self.origin_nodes.is_empty() {
            return bad("at least one origin node is required".into());
        }
        Ok(())
    }

    pub fn hot_key_count(&self) -> usize {
        (self.hot_fraction * self.key_count as f64).ceil() as usize
    }

    pub fn read_count(&self) -> usize {
        self.total_requests * self.read_percent as usize / 100
    }

    pub fn key_name(&self, index: usize) -> String {
        let width = (self.key_count.saturating_sub(1)).to_string().len();
        format!("key{index:0width$}")
    }

    pub fn keys(&self) -> Vec<String> {
        (0..self.key_count).map(|i| self.key_name(i)).collect()
    }

    pub fn hot_keys(&self) -> Vec<String> {
        (0..self.hot_key_count().min(self.key_count))
            .map(|i| self.key_name(i))
            .collect()
    }

    /// Values written once per key before measurement starts.
    pub fn preload_values(&self) -> Vec<StoredValue> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_cafe);
        (0..self.key_count)
            .map(|_| random_value(&mut rng, self.value_size))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub origin: NodeId,
    pub kind: RequestKind,
    pub key: String,
    /// Present for writes.
    pub value: Option<StoredValue>,
}

fn random_value(rng: &mut impl RngCore, size: usize) -> StoredValue {
    let mut bytes = vec![0u8; size];
    rng.fill_bytes(&mut bytes);
    StoredValue::new(bytes)
}

/// Builds the request list for `config`. A pure function of the config.
pub fn generate(config: &WorkloadConfig) -> Result<Vec<Request>, WorkloadError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.total_requests;

    let mut kinds = vec![RequestKind::Write; n];
    kinds[..config.read_count()].fill(RequestKind::Read);
    kinds.shuffle(&mut rng);

    let hot = config.hot_key_count();
    let zipf = match config.distribution {
        Distribution::Zipf => Some(
            Zipf::new(config.key_count as f64, config.zipf_exponent)
                .map_err(|e| WorkloadError::Invalid(e.to_string()))?,
        ),
        _ => None,
    };

    let mut requests = Vec::with_capacity(n);
    for (i, kind) in kinds.into_iter().enumerate() {
        let index = match config.distribution {
            Distribution::Uniform => rng.random_range(0..config.key_count),
            Distribution::Skewed => {
                if rng.random_bool(config.hot_access_fraction) {
                    rng.random_range(0..hot)
                } else {
                    rng.random_range(hot..config.key_count)
                }
            }
            Distribution::Zipf => {
                let rank = zipf.as_ref().expect("zipf sampler").sample(&mut rng) as usize;
                rank.clamp(1, config.key_count) - 1
            }
        };
        let value = match kind {
            RequestKind::Write => Some(random_value(&mut rng, config.value_size)),
            RequestKind::Read => None,
        };
        requests.push(Request {
            origin: config.origin_nodes[i % config.origin_nodes.len()].clone(),
            kind,
            key: config.key_name(index),
            value,
        });
    }
    Ok(requests)
}

/// Exact per-key request counts.
pub fn empirical_distribution(requests: &[Request]) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for r in requests {
        *counts.entry(r.key.clone()).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceLine {
    origin: NodeId,
    kind: RequestKind,
    key: String,
}

/// One JSON object per request: `{"origin":..,"kind":..,"key":..}`.
pub fn write_trace<W: Write>(requests: &[Request], mut out: W) -> Result<(), WorkloadError> {
    for r in requests {
        let line = TraceLine {
            origin: r.origin.clone(),
            kind: r.kind,
            key: r.key.clone(),
        };
        let json = serde_json::to_string(&line).map_err(|e| WorkloadError::Io(e.to_string()))?;
        writeln!(out, "{json}").map_err(|e| WorkloadError::Io(e.to_string()))?;
    }
    Ok(())
}

/// Inverse of [`write_trace`]. Traces carry no payloads, so each write gets
/// a value derived from its line number.
pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<Request>, WorkloadError> {
    let mut requests = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| WorkloadError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(&line).map_err(|e| WorkloadError::Trace {
            line: i + 1,
            message: e.to_string(),
        })?;
        let value = (parsed.kind == RequestKind::Write).then(|| StoredValue::new(format!("trace-{}", i + 1)));
        requests.push(Request {
            origin: parsed.origin,
            kind: parsed.kind,
            key: parsed.key,
            value,
        });
    }
    Ok(requests)
}
