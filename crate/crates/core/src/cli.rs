//! Command-line front end: `bench`, `daemon-pass`, `serve`, `gen-trace`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 validation failure.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{compare_report, render_table, run_scenario, BenchConfig, BenchError, BenchReport, Comparison};
use crate::clock::{Clock, ClockMode, WallClock};
use crate::daemon::{placement_pass, spawn_daemon};
use crate::http::serve_http;
use crate::model::{validate_policy_for, ClusterTopology, KeyMetadata, NodeId, OwnershipPolicy};
use crate::node::{Cluster, ClusterOptions, LatencyMode};
use crate::sim::Scenario;
use crate::workload::{generate, write_trace, Distribution, RequestKind, WorkloadConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Sim(crate::sim::SimError::Node(_)) => CliError::Runtime(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "redynis",
    version,
    about = "Traffic-aware repartitioning for a replicated key-value store"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run Local/Remote/Optimized scenarios on the simulated cluster.
    Bench(BenchArgs),
    /// Run one placement pass over a metadata snapshot and print the plan.
    DaemonPass(DaemonPassArgs),
    /// Serve a node's HTTP interface backed by an in-process cluster.
    Serve(ServeArgs),
    /// Write a workload trace as JSON lines.
    GenTrace(GenTraceArgs),
}

#[derive(Debug, Args, Default)]
pub struct WorkloadFlags {
    #[arg(long)]
    pub distribution: Option<Distribution>,
    #[arg(long = "read-pct")]
    pub read_pct: Option<u32>,
    #[arg(long)]
    pub requests: Option<usize>,
    #[arg(long)]
    pub keys: Option<usize>,
    #[arg(long = "hot-fraction")]
    pub hot_fraction: Option<f64>,
    #[arg(long = "hot-access-fraction")]
    pub hot_access_fraction: Option<f64>,
    #[arg(long = "zipf-exponent")]
    pub zipf_exponent: Option<f64>,
    #[arg(long, env = "REDYNIS_SEED")]
    pub seed: Option<u64>,
    /// Request-issuing nodes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub origins: Vec<NodeId>,
}

impl WorkloadFlags {
    fn apply(&self, w: &mut WorkloadConfig) {
        if let Some(v) = self.distribution {
            w.distribution = v;
        }
        if let Some(v) = self.read_pct {
            w.read_percent = v;
        }
        if let Some(v) = self.requests {
            w.total_requests = v;
        }
        if let Some(v) = self.keys {
            w.key_count = v;
        }
        if let Some(v) = self.hot_fraction {
            w.hot_fraction = v;
        }
        if let Some(v) = self.hot_access_fraction {
            w.hot_access_fraction = v;
        }
        if let Some(v) = self.zipf_exponent {
            w.zipf_exponent = v;
        }
        if let Some(v) = self.seed {
            w.seed = v;
        }
        if !self.origins.is_empty() {
            w.origin_nodes = self.origins.clone();
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSON file with the full bench configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenarios to run, comma separated. Defaults to all three.
    #[arg(long, value_delimiter = ',')]
    pub scenario: Vec<Scenario>,
    #[command(flatten)]
    pub workload: WorkloadFlags,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub coefficient: Option<f64>,
    #[arg(long = "remote-latency-ms")]
    pub remote_latency_ms: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long = "service-cost-ms")]
    pub service_cost_ms: Option<u64>,
    #[arg(long = "interval-ms")]
    pub interval_ms: Option<u64>,
    #[arg(long = "expiry-ms")]
    pub expiry_ms: Option<u64>,
    #[arg(long)]
    pub streams: Option<usize>,
    #[arg(long)]
    pub clock: Option<ClockMode>,
    /// Write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DaemonPassArgs {
    /// JSON lines of `{"key": .., "metadata": {..}}`.
    #[arg(long)]
    pub metadata: PathBuf,
    #[arg(long, default_value_t = 0.33)]
    pub coefficient: f64,
    #[arg(long, default_value_t = 3)]
    pub nodes: usize,
    /// Evaluation time in epoch ms; defaults to the current time.
    #[arg(long)]
    pub now: Option<u64>,
    #[arg(long = "expiry-ms", default_value_t = OwnershipPolicy::DEFAULT_EXPIRY_MILLIS)]
    pub expiry_ms: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long = "node-id")]
    pub node_id: NodeId,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Other members of the in-process cluster, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub peers: Vec<NodeId>,
    /// Master propagator; defaults to this node.
    #[arg(long)]
    pub serializer: Option<NodeId>,
    #[arg(long = "remote-latency-ms", default_value_t = 0)]
    pub remote_latency_ms: u64,
    /// Also serve each peer, on the following ports (or ephemeral ports when
    /// `--port 0`).
    #[arg(long = "expose-peers")]
    pub expose_peers: bool,
    /// Run the placement daemon in the background.
    #[arg(long)]
    pub daemon: bool,
    #[arg(long, default_value_t = 0.33)]
    pub coefficient: f64,
    #[arg(long = "interval-ms", default_value_t = OwnershipPolicy::DEFAULT_INTERVAL_MILLIS)]
    pub interval_ms: u64,
    #[arg(long = "expiry-ms", default_value_t = OwnershipPolicy::DEFAULT_EXPIRY_MILLIS)]
    pub expiry_ms: u64,
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    /// JSON workload configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub workload: WorkloadFlags,
    /// Shorthand for origins node-1..node-N.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_VALIDATION;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    let result = match cli.command {
        Command::Bench(a) => cmd_bench(&a, out),
        Command::DaemonPass(a) => cmd_daemon_pass(&a, out),
        Command::Serve(a) => cmd_serve(&a, out),
        Command::GenTrace(a) => cmd_gen_trace(&a, out, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Config file, then flags.
pub fn merge_bench_config(args: &BenchArgs) -> Result<BenchConfig, CliError> {
    let mut cfg: BenchConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => BenchConfig::default(),
    };
    args.workload.apply(&mut cfg.workload);
    if let Some(seed) = args.workload.seed {
        cfg.sim.seed = seed;
    }
    if let Some(v) = args.nodes {
        cfg.sim.node_count = v;
    }
    if let Some(v) = args.remote_latency_ms {
        cfg.sim.remote_latency_millis = v;
    }
    if let Some(v) = args.streams {
        cfg.sim.streams_per_node = v;
    }
    if let Some(v) = args.clock {
        cfg.sim.clock_mode = v;
    }
    if let Some(v) = args.coefficient {
        cfg.policy.coefficient = v;
    }
    if let Some(v) = args.interval_ms {
        cfg.policy.daemon_interval_millis = v;
    }
    if let Some(v) = args.expiry_ms {
        cfg.policy.expiry_millis = v;
    }
    if let Some(v) = args.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = args.service_cost_ms {
        cfg.service_cost_millis = v;
    }
    cfg.validate()?;
    let mut probe = cfg.workload.clone();
    if probe.origin_nodes.is_empty() {
        probe.origin_nodes = vec![NodeId::numbered(1)];
    }
    probe.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct BenchOutput<'a> {
    reports: &'a [BenchReport],
    comparison: Option<Comparison>,
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = merge_bench_config(args)?;
    let scenarios: Vec<Scenario> = if args.scenario.is_empty() {
        Scenario::ALL.to_vec()
    } else {
        args.scenario.clone()
    };
    let reports = scenarios
        .iter()
        .map(|s| run_scenario(&cfg, *s))
        .collect::<Result<Vec<_>, _>>()?;
    let comparison = if reports.len() >= 2 {
        Some(compare_report(&reports)?)
    } else {
        None
    };

    let w = |e: std::io::Error| CliError::Runtime(e.to_string());
    write!(out, "{}", render_table(&reports)).map_err(w)?;
    if let Some(c) = &comparison {
        write!(out, "\n{}", c.render()).map_err(w)?;
    }
    if let Some(path) = &args.report {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer_pretty(
            &mut writer,
            &BenchOutput {
                reports: &reports,
                comparison,
            },
        )
        .map_err(|e| CliError::Runtime(e.to_string()))?;
        writer.flush().map_err(|e| io_err(path, e))?;
    }
    if reports.iter().any(|r| r.failures > 0) {
        return Err(CliError::Runtime("some requests failed; see the report".into()));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotLine {
    key: String,
    metadata: KeyMetadata,
}

/// Reads a metadata snapshot in JSON lines form. Errors carry the 1-based
/// line number.
pub fn read_snapshot(reader: impl BufRead) -> Result<Vec<(String, KeyMetadata)>, CliError> {
    let mut snapshot = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::Runtime(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SnapshotLine = serde_json::from_str(&line)
            .map_err(|e| CliError::Validation(format!("line {}: malformed metadata: {e}", i + 1)))?;
        if !parsed.metadata.is_consistent() {
            return Err(CliError::Validation(format!(
                "line {}: totalAccessCount must equal the sum of hostAccesses and hosts must be non-empty",
                i + 1
            )));
        }
        snapshot.push((parsed.key, parsed.metadata));
    }
    Ok(snapshot)
}

pub fn cmd_daemon_pass(args: &DaemonPassArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let policy = OwnershipPolicy {
        coefficient: args.coefficient,
        expiry_millis: args.expiry_ms,
        daemon_interval_millis: OwnershipPolicy::DEFAULT_INTERVAL_MILLIS,
    };
    validate_policy_for(&policy, args.nodes).map_err(|e| CliError::Validation(e.to_string()))?;
    let file = File::open(&args.metadata).map_err(|e| io_err(&args.metadata, e))?;
    let snapshot = read_snapshot(BufReader::new(file))?;
    let now = args.now.unwrap_or_else(|| WallClock.now_millis());
    let plan = placement_pass(&snapshot, &policy, now);
    let json = serde_json::to_string_pretty(&plan).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(out, "{json}").map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

pub fn cmd_serve(args: &ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut nodes = vec![args.node_id.clone()];
    for p in &args.peers {
        if !nodes.contains(p) {
            nodes.push(p.clone());
        }
    }
    let serializer = args.serializer.clone().unwrap_or_else(|| args.node_id.clone());
    let topology = ClusterTopology::uniform_with(nodes.clone(), serializer, args.remote_latency_ms)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let policy = OwnershipPolicy {
        coefficient: args.coefficient,
        expiry_millis: args.expiry_ms,
        daemon_interval_millis: args.interval_ms,
    };
    if args.daemon {
        validate_policy_for(&policy, nodes.len()).map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let options = ClusterOptions {
        latency_mode: LatencyMode::Sleep,
        ..Default::default()
    };
    let cluster = Arc::new(Cluster::new(topology, Arc::new(WallClock), options));
    let daemon = if args.daemon {
        Some(spawn_daemon(Arc::clone(&cluster), policy).map_err(|e| CliError::Validation(e.to_string()))?)
    } else {
        None
    };

    let exposed: Vec<NodeId> = if args.expose_peers {
        nodes
    } else {
        vec![args.node_id.clone()]
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let result = runtime.block_on(async {
        let mut servers = Vec::new();
        for (i, id) in exposed.iter().enumerate() {
            let port = if args.port == 0 { 0 } else { args.port + i as u16 };
            let listener = tokio::net::TcpListener::bind((args.host.as_str(), port))
                .await
                .map_err(|e| CliError::Runtime(format!("bind {}:{port}: {e}", args.host)))?;
            let addr = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
            writeln!(out, "{id} listening on http://{addr}").map_err(|e| CliError::Runtime(e.to_string()))?;
            out.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
            let service = cluster.node(id.clone()).map_err(|e| CliError::Runtime(e.to_string()))?;
            let shutdown = async {
                let _ = tokio::signal::ctrl_c().await;
            };
            servers.push(tokio::spawn(serve_http(service, listener, shutdown)));
        }
        for s in servers {
            s.await
                .map_err(|e| CliError::Runtime(e.to_string()))?
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        Ok::<(), CliError>(())
    });
    if let Some(d) = daemon {
        d.stop();
    }
    result
}

pub fn cmd_gen_trace(args: &GenTraceArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg: WorkloadConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => WorkloadConfig::default(),
    };
    args.workload.apply(&mut cfg);
    if args.workload.origins.is_empty() {
        if let Some(n) = args.nodes {
            cfg.origin_nodes = (1..=n).map(NodeId::numbered).collect();
        }
    }
    if cfg.origin_nodes.is_empty() {
        cfg.origin_nodes = vec![NodeId::numbered(1)];
    }
    let requests = generate(&cfg).map_err(|e| CliError::Validation(e.to_string()))?;
    let written = match &args.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| io_err(path, e))?;
            let mut w = BufWriter::new(file);
            write_trace(&requests, &mut w).map_err(|e| CliError::Runtime(e.to_string()))?;
            w.flush().map_err(|e| io_err(path, e))?;
            true
        }
        None => {
            write_trace(&requests, &mut *out).map_err(|e| CliError::Runtime(e.to_string()))?;
            false
        }
    };
    let reads = requests.iter().filter(|r| r.kind == RequestKind::Read).count();
    let distinct: BTreeSet<&str> = requests.iter().map(|r| r.key.as_str()).collect();
    let sink: &mut dyn Write = if written { out } else { err };
    let _ = writeln!(
        sink,
        "{} requests ({} reads, {} writes) over {} distinct keys",
        requests.len(),
        reads,
        requests.len() - reads,
        distinct.len()
    );
    Ok(())
}
