//! In-process cluster simulator.
//!
//! [`build_cluster`] wires `n` nodes, one shared metadata layer and a clock.
//! [`ClusterHandle::replay`] drives a request list through the cluster as a
//! discrete-event simulation: each client stream issues its next request
//! when the previous one completes, and daemon passes fire at their
//! scheduled simulated times.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::StoredValue;
use crate::clock::{Clock, ClockMode, VirtualClock, WallClock};
use crate::daemon::{spawn_daemon, PlacementDaemon};
use crate::model::{ClusterTopology, ModelError, NodeId, OwnershipPolicy, PolicyViolation};
use crate::node::{Cluster, ClusterOptions, LatencyMode, NodeError, Recording};
use crate::workload::{Request, RequestKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct SimConfig {
    pub node_count: usize,
    pub remote_latency_millis: u64,
    /// Defaults to the first node.
    pub master_propagator: Option<NodeId>,
    pub seed: u64,
    pub clock_mode: ClockMode,
    /// Overrides the uniform matrix when present.
    pub latency_matrix: Option<Vec<Vec<u64>>>,
    pub streams_per_node: usize,
    pub recording: Recording,
    pub arrival_log: bool,
    pub start_millis: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            node_count: 3,
            remote_latency_millis: 100,
            master_propagator: None,
            seed: 0,
            clock_mode: ClockMode::Virtual,
            latency_matrix: None,
            streams_per_node: 1,
            recording: Recording::Async,
            arrival_log: false,
            start_millis: 0,
        }
    }
}

impl SimConfig {
    pub fn topology(&self) -> Result<ClusterTopology, SimError> {
        if self.node_count == 0 {
            return Err(SimError::Config("nodeCount must be at least 1".into()));
        }
        let nodes: Vec<NodeId> = (1..=self.node_count).map(NodeId::numbered).collect();
        let master = self.master_propagator.clone().unwrap_or_else(|| nodes[0].clone());
        let topology = match &self.latency_matrix {
            Some(m) => ClusterTopology::new(nodes, master, m.clone())?,
            None => ClusterTopology::uniform_with(nodes, master, self.remote_latency_millis)?,
        };
        Ok(topology)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyViolation),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error("{keys} keys but {values} values")]
    LengthMismatch { keys: usize, values: usize },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
}

/// The three benchmark placements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Every key on every requesting node.
    Local,
    /// Every key on one node that never issues requests; no daemon.
    Remote,
    /// Same start as `Remote`, daemon enabled.
    Optimized,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Local, Scenario::Remote, Scenario::Optimized];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Local => "local",
            Scenario::Remote => "remote",
            Scenario::Optimized => "optimized",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scenario {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(Scenario::Local),
            "remote" => Ok(Scenario::Remote),
            "optimized" => Ok(Scenario::Optimized),
            other => Err(SimError::UnknownScenario(other.to_owned())),
        }
    }
}

enum SimClock {
    Virtual(Arc<VirtualClock>),
    Wall,
}

pub struct ClusterHandle {
    config: SimConfig,
    cluster: Arc<Cluster>,
    clock: SimClock,
    daemon_enabled: bool,
    clients: Vec<NodeId>,
}

pub fn build_cluster(config: &SimConfig) -> Result<ClusterHandle, SimError> {
    if config.streams_per_node == 0 {
        return Err(SimError::Config("streamsPerNode must be at least 1".into()));
    }
    let topology = config.topology()?;
    let (clock, shared, latency_mode): (SimClock, Arc<dyn Clock>, _) = match config.clock_mode {
        ClockMode::Virtual => {
            let vc = Arc::new(VirtualClock::starting_at(config.start_millis));
            (SimClock::Virtual(Arc::clone(&vc)), vc, LatencyMode::Account)
        }
        ClockMode::Wall => (SimClock::Wall, Arc::new(WallClock), LatencyMode::Sleep),
    };
    let options = ClusterOptions {
        latency_mode,
        recording: config.recording,
        arrival_log: config.arrival_log,
        ..Default::default()
    };
    let nodes = topology.nodes();
    let clients = if nodes.len() == 1 {
        nodes.to_vec()
    } else {
        nodes[..nodes.len() - 1].to_vec()
    };
    let cluster = Arc::new(Cluster::new(topology, shared, options));
    Ok(ClusterHandle {
        config: config.clone(),
        cluster,
        clock,
        daemon_enabled: false,
        clients,
    })
}

/// Per-request outcome in simulated (or measured) time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RequestRecord {
    pub index: usize,
    /// Client stream that issued the request.
    pub stream: usize,
    pub origin: NodeId,
    pub kind: RequestKind,
    pub issued_at: u64,
    pub completed_at: u64,
    pub latency_millis: u64,
    pub local: bool,
    pub failed: bool,
    /// Read of a key with no metadata.
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Trace {
    pub started_at: u64,
    pub finished_at: u64,
    pub daemon_passes: u64,
    /// Sorted by request index.
    pub records: Vec<RequestRecord>,
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    /// Charged on every request in addition to network latency.
    pub service_cost_millis: u64,
    pub policy: OwnershipPolicy,
}

impl ClusterHandle {
    pub fn cluster(&self) -> &Arc<Cluster> {
        &self.cluster
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn topology(&self) -> &ClusterTopology {
        self.cluster.topology()
    }

    pub fn now_millis(&self) -> u64 {
        self.cluster.clock().now_millis()
    }

    pub fn daemon_enabled(&self) -> bool {
        self.daemon_enabled
    }

    pub fn set_daemon_enabled(&mut self, enabled: bool) {
        self.daemon_enabled = enabled;
    }

    /// Node that holds every key in the remote and optimized scenarios: the
    /// last node, or the only one.
    pub fn holder(&self) -> &NodeId {
        self.topology().nodes().last().expect("non-empty topology")
    }

    /// Nodes that issue requests. Defaults to everything but the holder (all
    /// nodes when `n == 1`).
    pub fn client_nodes(&self) -> Vec<NodeId> {
        self.clients.clone()
    }

    /// Restricts the request-issuing set, which decides local-scenario
    /// placement. The holder may not issue requests unless it is the only node.
    pub fn set_client_nodes(&mut self, clients: Vec<NodeId>) -> Result<(), SimError> {
        if clients.is_empty() {
            return Err(SimError::Config("at least one client node is required".into()));
        }
        for c in &clients {
            if !self.topology().contains(c) {
                return Err(SimError::Config(format!("client {c} is not in the topology")));
            }
            if self.topology().len() > 1 && c == self.holder() {
                return Err(SimError::Config(format!(
                    "{c} holds the remote data and cannot issue requests"
                )));
            }
        }
        self.clients = clients;
        Ok(())
    }

    /// Charges one request from `from` to `to` against the clock.
    pub fn simulate_request_latency(&self, from: &NodeId, to: &NodeId) -> Result<u64, SimError> {
        let latency = self.topology().latency(from, to)?;
        self.cluster.clock().advance(latency);
        Ok(latency)
    }

    /// Places `keys` according to `scenario` and sets whether the daemon runs.
    pub fn inject_scenario(
        &mut self,
        scenario: Scenario,
        keys: &[String],
        values: &[StoredValue],
    ) -> Result<(), SimError> {
        if keys.len() != values.len() {
            return Err(SimError::LengthMismatch {
                keys: keys.len(),
                values: values.len(),
            });
        }
        match scenario {
            Scenario::Local => {
                let clients: BTreeSet<NodeId> = self.client_nodes().into_iter().collect();
                for (k, v) in keys.iter().zip(values) {
                    self.cluster.seed(k, v.clone(), &clients)?;
                }
            }
            Scenario::Remote | Scenario::Optimized => {
                let holder = self.holder().clone();
                for (k, v) in keys.iter().zip(values) {
                    let r = self.cluster.store(&holder, k, v.clone())?;
                    if !r.success {
                        return Err(SimError::Config(format!(
                            "preload of {k:?} failed: {}",
                            r.error.unwrap_or_default()
                        )));
                    }
                }
            }
        }
        self.daemon_enabled = scenario == Scenario::Optimized;
        Ok(())
    }

    fn execute(&self, index: usize, req: &Request) -> (u64, bool, bool, bool) {
        match req.kind {
            RequestKind::Read => match self.cluster.fetch(&req.origin, &req.key) {
                Ok(r) => (r.latency_millis, !r.remote, false, r.value.is_none()),
                Err(err) => {
                    log::debug!("request {index} failed: {err}");
                    (0, false, true, false)
                }
            },
            RequestKind::Write => {
                let value = req
                    .value
                    .clone()
                    .unwrap_or_else(|| StoredValue::new(format!("w{index}")));
                match self.cluster.store(&req.origin, &req.key, value) {
                    Ok(r) if r.success => (r.latency_millis, r.latency_millis == 0, false, false),
                    Ok(_) | Err(_) => (0, false, true, false),
                }
            }
        }
    }

    /// Replays `requests`. Each origin gets `streams_per_node` sequential
    /// client streams; an origin's requests are dealt to its streams
    /// round-robin in order.
    pub fn replay(&mut self, requests: &[Request], options: &ReplayOptions) -> Result<Trace, SimError> {
        match &self.clock {
            SimClock::Virtual(clock) => {
                let clock = Arc::clone(clock);
                self.replay_virtual(&clock, requests, options)
            }
            SimClock::Wall => self.replay_wall(requests, options),
        }
    }

    fn streams(&self, requests: &[Request]) -> Vec<VecDeque<usize>> {
        let per_node = self.config.streams_per_node;
        let mut origins: Vec<NodeId> = Vec::new();
        let mut dealt: Vec<usize> = Vec::new();
        let mut streams: Vec<VecDeque<usize>> = Vec::new();
        for (i, req) in requests.iter().enumerate() {
            let slot = match origins.iter().position(|o| *o == req.origin) {
                Some(p) => p,
                None => {
                    origins.push(req.origin.clone());
                    dealt.push(0);
                    streams.extend((0..per_node).map(|_| VecDeque::new()));
                    origins.len() - 1
                }
            };
            streams[slot * per_node + dealt[slot] % per_node].push_back(i);
            dealt[slot] += 1;
        }
        streams
    }

    fn replay_virtual(
        &mut self,
        clock: &VirtualClock,
        requests: &[Request],
        options: &ReplayOptions,
    ) -> Result<Trace, SimError> {
        let start = clock.now_millis();
        let mut daemon = if self.daemon_enabled {
            Some(PlacementDaemon::new(options.policy, &self.cluster, start)?)
        } else {
            None
        };
        let mut streams = self.streams(requests);
        let mut ready: BinaryHeap<Reverse<(u64, usize)>> = (0..streams.len())
            .filter(|s| !streams[*s].is_empty())
            .map(|s| Reverse((start, s)))
            .collect();
        let mut records: Vec<Option<RequestRecord>> = vec![None; requests.len()];

        while let Some(&Reverse((at, stream))) = ready.peek() {
            if let Some(d) = daemon.as_mut() {
                if d.next_pass_at() <= at {
                    clock.advance_to(d.next_pass_at());
                    d.run_due(&self.cluster);
                    continue;
                }
            }
            ready.pop();
            clock.advance_to(at);
            let index = streams[stream].pop_front().expect("ready stream has work");
            let req = &requests[index];
            let (latency, local, failed, missing) = self.execute(index, req);
            let completed = at + options.service_cost_millis + latency;
            records[index] = Some(RequestRecord {
                index,
                stream,
                origin: req.origin.clone(),
                kind: req.kind,
                issued_at: at,
                completed_at: completed,
                latency_millis: latency,
                local,
                failed,
                missing,
            });
            if !streams[stream].is_empty() {
                ready.push(Reverse((completed, stream)));
            }
        }

        let records: Vec<RequestRecord> = records.into_iter().map(|r| r.expect("every request ran")).collect();
        let finished = records.iter().map(|r| r.completed_at).max().unwrap_or(start);
        clock.advance_to(finished);
        Ok(Trace {
            started_at: start,
            finished_at: finished,
            daemon_passes: daemon.map(|d| d.passes()).unwrap_or(0),
            records,
        })
    }

    /// Wall-clock smoke mode: requests run sequentially in real time and the
    /// daemon runs on its own thread.
    fn replay_wall(&mut self, requests: &[Request], options: &ReplayOptions) -> Result<Trace, SimError> {
        let daemon = if self.daemon_enabled {
            Some(spawn_daemon(Arc::clone(&self.cluster), options.policy)?)
        } else {
            None
        };
        let epoch = Instant::now();
        let elapsed = |e: &Instant| e.elapsed().as_millis() as u64;
        let mut records = Vec::with_capacity(requests.len());
        for (index, req) in requests.iter().enumerate() {
            let issued = elapsed(&epoch);
            let (latency, local, failed, missing) = self.execute(index, req);
            self.cluster.clock().advance(options.service_cost_millis);
            records.push(RequestRecord {
                index,
                stream: 0,
                origin: req.origin.clone(),
                kind: req.kind,
                issued_at: issued,
                completed_at: elapsed(&epoch),
                latency_millis: latency,
                local,
                failed,
                missing,
            });
        }
        let passes = daemon.map(|d| d.stop()).unwrap_or(0);
        Ok(Trace {
            started_at: 0,
            finished_at: elapsed(&epoch),
            daemon_passes: passes,
            records,
        })
    }
}
