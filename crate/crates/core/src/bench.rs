//! Scenario runner and report statistics.
//!
//! Throughput is measured in simulated time: requests divided by the span
//! from the first issue to the last completion. Every request pays a fixed
//! service cost on top of network latency, so the all-local scenario has a
//! finite elapsed time.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::model::{validate_policy, OwnershipPolicy, PolicyViolation};
use crate::sim::{build_cluster, ReplayOptions, RequestRecord, Scenario, SimConfig, SimError, Trace};
use crate::workload::{generate, Distribution, RequestKind, WorkloadConfig, WorkloadError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct BenchConfig {
    pub sim: SimConfig,
    pub workload: WorkloadConfig,
    pub policy: OwnershipPolicy,
    pub iterations: usize,
    pub service_cost_millis: u64,
    /// Trailing share of the request list treated as the converged phase.
    pub converged_fraction: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sim: SimConfig::default(),
            workload: WorkloadConfig::default(),
            policy: OwnershipPolicy::default(),
            iterations: 5,
            service_cost_millis: 1,
            converged_fraction: 0.5,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Policy(#[from] PolicyViolation),
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("convergedFraction must be in (0, 1], got {0}")]
    ConvergedFraction(f64),
    #[error("cannot compare reports over different workloads")]
    MismatchedWorkloads,
    #[error("need at least two reports to compare")]
    TooFewReports,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.iterations == 0 {
            return Err(BenchError::NoIterations);
        }
        if !(self.converged_fraction > 0.0 && self.converged_fraction <= 1.0) {
            return Err(BenchError::ConvergedFraction(self.converged_fraction));
        }
        validate_policy(&self.policy, &self.sim.topology()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WorkloadSummary {
    pub distribution: Distribution,
    pub read_percent: u32,
    pub total_requests: usize,
    pub key_count: usize,
    pub reads: usize,
    pub writes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IterationStats {
    pub seed: u64,
    pub elapsed_millis: u64,
    pub throughput_ops_per_sec: f64,
    pub throughput_capped: bool,
    pub local_hit_rate: f64,
    pub converged_local_hit_rate: f64,
    pub converged_throughput_ops_per_sec: f64,
    pub daemon_passes: u64,
    pub failures: u64,
    pub misses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    pub scenario: Scenario,
    pub workload: WorkloadSummary,
    /// Mean over iterations.
    pub throughput_ops_per_sec: f64,
    pub ci99_low: f64,
    pub ci99_high: f64,
    /// Network latency only; the service cost is reported separately.
    pub mean_latency_millis: f64,
    pub p50_latency_millis: f64,
    pub p99_latency_millis: f64,
    pub local_hit_rate: f64,
    pub converged_local_hit_rate: f64,
    pub converged_throughput_ops_per_sec: f64,
    pub service_cost_millis: u64,
    pub iterations: usize,
    pub failures: u64,
    pub throughput_capped: bool,
    pub per_iteration: Vec<IterationStats>,
    pub config: BenchConfig,
}

/// Runs `config.iterations` independent iterations of `scenario`, each on a
/// fresh cluster with workload seed `seed + i`.
pub fn run_scenario(config: &BenchConfig, scenario: Scenario) -> Result<BenchReport, BenchError> {
    config.validate()?;
    let mut per_iteration = Vec::with_capacity(config.iterations);
    let mut latencies: Vec<u64> = Vec::new();
    let mut reads = 0usize;
    let mut local_reads = 0usize;

    for i in 0..config.iterations {
        let mut handle = build_cluster(&config.sim)?;
        let mut workload = config.workload.clone();
        if workload.origin_nodes.is_empty() {
            workload.origin_nodes = handle.client_nodes()[..1].to_vec();
        }
        handle.set_client_nodes(workload.origin_nodes.clone())?;
        workload.seed = config.workload.seed.wrapping_add(i as u64);
        handle.inject_scenario(scenario, &workload.keys(), &workload.preload_values())?;
        let requests = generate(&workload)?;
        let options = ReplayOptions {
            service_cost_millis: config.service_cost_millis,
            policy: config.policy,
        };
        let trace = handle.replay(&requests, &options)?;

        latencies.extend(trace.records.iter().map(|r| r.latency_millis));
        for r in trace
            .records
            .iter()
            .filter(|r| r.kind == RequestKind::Read && !r.failed)
        {
            reads += 1;
            local_reads += r.local as usize;
        }
        per_iteration.push(iteration_stats(&trace, workload.seed, config.converged_fraction));
    }

    let throughputs: Vec<f64> = per_iteration.iter().map(|s| s.throughput_ops_per_sec).collect();
    let (mean_tp, ci_low, ci_high) = mean_ci99(&throughputs);
    latencies.sort_unstable();
    let mean_of = |f: fn(&IterationStats) -> f64| per_iteration.iter().map(f).sum::<f64>() / per_iteration.len() as f64;

    Ok(BenchReport {
        scenario,
        workload: summary(&config.workload),
        throughput_ops_per_sec: mean_tp,
        ci99_low: ci_low,
        ci99_high: ci_high,
        mean_latency_millis: latencies.iter().sum::<u64>() as f64 / latencies.len().max(1) as f64,
        p50_latency_millis: percentile(&latencies, 0.50),
        p99_latency_millis: percentile(&latencies, 0.99),
        local_hit_rate: if reads == 0 {
            0.0
        } else {
            local_reads as f64 / reads as f64
        },
        converged_local_hit_rate: mean_of(|s| s.converged_local_hit_rate),
        converged_throughput_ops_per_sec: mean_of(|s| s.converged_throughput_ops_per_sec),
        service_cost_millis: config.service_cost_millis,
        iterations: config.iterations,
        failures: per_iteration.iter().map(|s| s.failures).sum(),
        throughput_capped: per_iteration.iter().any(|s| s.throughput_capped),
        per_iteration,
        config: config.clone(),
    })
}

fn summary(w: &WorkloadConfig) -> WorkloadSummary {
    WorkloadSummary {
        distribution: w.distribution,
        read_percent: w.read_percent,
        total_requests: w.total_requests,
        key_count: w.key_count,
        reads: w.read_count(),
        writes: w.total_requests - w.read_count(),
    }
}

/// Requests per simulated second. A zero span is treated as 1 ms and flagged.
fn throughput(count: usize, span_millis: u64) -> (f64, bool) {
    if count == 0 {
        return (0.0, false);
    }
    let capped = span_millis == 0;
    (count as f64 * 1000.0 / span_millis.max(1) as f64, capped)
}

fn hit_rate<'a>(records: impl Iterator<Item = &'a RequestRecord>) -> f64 {
    let (mut reads, mut local) = (0usize, 0usize);
    for r in records.filter(|r| r.kind == RequestKind::Read && !r.failed) {
        reads += 1;
        local += r.local as usize;
    }
    if reads == 0 {
        0.0
    } else {
        local as f64 / reads as f64
    }
}

/// Sum over streams of each stream's requests per second of its own span
/// (first issue to last completion). Any zero span counts as 1 ms and flags.
fn aggregate_throughput(per_stream: &BTreeMap<usize, Vec<&RequestRecord>>) -> (f64, bool) {
    let mut total = 0.0;
    let mut capped = false;
    for records in per_stream.values() {
        let lo = records.iter().map(|r| r.issued_at).min().unwrap_or(0);
        let hi = records.iter().map(|r| r.completed_at).max().unwrap_or(0);
        let (tp, c) = throughput(records.len(), hi - lo);
        total += tp;
        capped |= c;
    }
    (total, capped)
}

fn iteration_stats(trace: &Trace, seed: u64, converged_fraction: f64) -> IterationStats {
    let mut per_stream: BTreeMap<usize, Vec<&RequestRecord>> = BTreeMap::new();
    for r in &trace.records {
        per_stream.entry(r.stream).or_default().push(r);
    }
    let (tp, capped) = aggregate_throughput(&per_stream);

    // Converged phase: the trailing fraction of each stream.
    let tails: BTreeMap<usize, Vec<&RequestRecord>> = per_stream
        .iter()
        .map(|(s, records)| {
            let n = records.len();
            let start = n - ((n as f64 * converged_fraction).round() as usize).min(n);
            (*s, records[start..].to_vec())
        })
        .filter(|(_, tail)| !tail.is_empty())
        .collect();
    let (tail_tp, _) = aggregate_throughput(&tails);

    IterationStats {
        seed,
        elapsed_millis: trace.finished_at - trace.started_at,
        throughput_ops_per_sec: tp,
        throughput_capped: capped,
        local_hit_rate: hit_rate(trace.records.iter()),
        converged_local_hit_rate: hit_rate(tails.values().flatten().copied()),
        converged_throughput_ops_per_sec: tail_tp,
        daemon_passes: trace.daemon_passes,
        failures: trace.records.iter().filter(|r| r.failed).count() as u64,
        misses: trace.records.iter().filter(|r| r.missing).count() as u64,
    }
}

/// Mean with a two-sided 99% Student-t interval. One sample gives a
/// zero-width interval.
pub fn mean_ci99(samples: &[f64]) -> (f64, f64, f64) {
    let k = samples.len();
    if k == 0 {
        return (0.0, 0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, mean, mean);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (k - 1) as f64)
        .expect("df > 0")
        .inverse_cdf(0.995);
    let half = t * (var / k as f64).sqrt();
    (mean, mean - half, mean + half)
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[u64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1] as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PairComparison {
    pub left: Scenario,
    pub right: Scenario,
    /// `left / right` throughput.
    pub ratio: f64,
    /// Set when either side's elapsed time was zero and its throughput was
    /// capped.
    pub capped: bool,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Comparison {
    pub workload: WorkloadSummary,
    /// Fastest first.
    pub ordering: Vec<Scenario>,
    pub pairs: Vec<PairComparison>,
}

impl Comparison {
    pub fn pair(&self, left: Scenario, right: Scenario) -> Option<&PairComparison> {
        self.pairs.iter().find(|p| p.left == left && p.right == right)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22} {:>10}  verdict", "pair", "ratio");
        for p in &self.pairs {
            let ratio = format!("{:.3}{}", p.ratio, if p.capped { "*" } else { "" });
            let _ = writeln!(
                out,
                "{:<22} {:>10}  {}",
                format!("{}/{}", p.left, p.right),
                ratio,
                p.verdict
            );
        }
        out
    }
}

/// Pairwise throughput ratios and the overall ordering.
pub fn compare_report(reports: &[BenchReport]) -> Result<Comparison, BenchError> {
    if reports.len() < 2 {
        return Err(BenchError::TooFewReports);
    }
    let workload = reports[0].workload.clone();
    if reports.iter().any(|r| r.workload != workload) {
        return Err(BenchError::MismatchedWorkloads);
    }
    let mut pairs = Vec::new();
    for (i, a) in reports.iter().enumerate() {
        for b in &reports[i + 1..] {
            let ratio = if b.throughput_ops_per_sec > 0.0 {
                a.throughput_ops_per_sec / b.throughput_ops_per_sec
            } else {
                f64::MAX
            };
            let verdict = if ratio > 1.0 {
                format!("{} ≻ {}", a.scenario, b.scenario)
            } else if ratio < 1.0 {
                format!("{} ≺ {}", a.scenario, b.scenario)
            } else {
                format!("{} ≈ {}", a.scenario, b.scenario)
            };
            pairs.push(PairComparison {
                left: a.scenario,
                right: b.scenario,
                ratio,
                capped: a.throughput_capped || b.throughput_capped,
                verdict,
            });
        }
    }
    let mut ordered: Vec<&BenchReport> = reports.iter().collect();
    ordered.sort_by(|a, b| b.throughput_ops_per_sec.total_cmp(&a.throughput_ops_per_sec));
    Ok(Comparison {
        workload,
        ordering: ordered.iter().map(|r| r.scenario).collect(),
        pairs,
    })
}

/// Aligned text table, one row per report.
pub fn render_table(reports: &[BenchReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>6} {:>8} {:>12} {:>25} {:>9} {:>7} {:>7} {:>8} {:>10} {:>6}",
        "scenario", "read%", "requests", "ops/s", "99% CI", "mean ms", "p50", "p99", "local", "conv.local", "fail"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>8} {:>12.2} {:>25} {:>9.2} {:>7.0} {:>7.0} {:>8.4} {:>10.4} {:>6}",
            r.scenario.as_str(),
            r.workload.read_percent,
            r.workload.total_requests,
            r.throughput_ops_per_sec,
            format!("[{:.2}, {:.2}]", r.ci99_low, r.ci99_high),
            r.mean_latency_millis,
            r.p50_latency_millis,
            r.p99_latency_millis,
            r.local_hit_rate,
            r.converged_local_hit_rate,
            r.failures,
        );
    }
    let _ = writeln!(
        out,
        "service cost per request: {} ms (simulated)",
        reports.first().map_or(0, |r| r.service_cost_millis)
    );
    out
}
