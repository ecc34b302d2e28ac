//! Shared domain types and the ownership-coefficient arithmetic.
//!
//! Nothing in here performs I/O. Every function is a pure function of its
//! arguments and can be evaluated from any thread.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque node identifier, e.g. `"node-1"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Result<Self, ModelError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ModelError::EmptyNodeId);
        }
        Ok(NodeId(id))
    }

    /// The conventional `node-{index}` name, 1-based.
    pub fn numbered(index: usize) -> Self {
        NodeId(format!("node-{index}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for NodeId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeId::new(s.trim())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("node identifiers must be non-empty")]
    EmptyNodeId,
    #[error("topology must contain at least one node")]
    EmptyTopology,
    #[error("duplicate node identifier {0}")]
    DuplicateNode(NodeId),
    #[error("master propagator {0} is not a member of the topology")]
    UnknownPropagator(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("latency matrix must be {n}x{n}")]
    LatencyShape { n: usize },
    #[error("latency from {0} to itself must be 0")]
    NonZeroSelfLatency(NodeId),
}

/// Usage record kept for every key in the metadata layer.
///
/// Serializes to exactly the four fields `totalAccessCount`, `hosts`,
/// `hostAccesses`, `lastAccessedDate`, in that order. Unknown fields are
/// rejected on input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct KeyMetadata {
    pub total_access_count: u64,
    pub hosts: BTreeSet<NodeId>,
    pub host_accesses: BTreeMap<NodeId, u64>,
    pub last_accessed_date: u64,
}

impl KeyMetadata {
    /// Metadata for a freshly stored key: one host, no recorded accesses.
    pub fn created(host: NodeId, at_millis: u64) -> Self {
        KeyMetadata {
            total_access_count: 0,
            hosts: BTreeSet::from([host]),
            host_accesses: BTreeMap::new(),
            last_accessed_date: at_millis,
        }
    }

    /// Count one access by `accessor` at `at_millis`.
    pub fn record(&mut self, accessor: &NodeId, at_millis: u64) {
        *self.host_accesses.entry(accessor.clone()).or_insert(0) += 1;
        self.total_access_count += 1;
        self.last_accessed_date = self.last_accessed_date.max(at_millis);
    }

    pub fn accesses_by(&self, node: &NodeId) -> u64 {
        self.host_accesses.get(node).copied().unwrap_or(0)
    }

    /// `totalAccessCount == Σ hostAccesses` and `hosts` non-empty.
    pub fn is_consistent(&self) -> bool {
        !self.hosts.is_empty() && self.host_accesses.values().sum::<u64>() == self.total_access_count
    }

    pub fn is_sole_host(&self, node: &NodeId) -> bool {
        self.hosts.len() == 1 && self.hosts.contains(node)
    }
}

/// Placement policy: ownership coefficient plus the daemon's timing knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OwnershipPolicy {
    /// Fraction of a key's accesses a node must contribute to hold a replica.
    pub coefficient: f64,
    pub expiry_millis: u64,
    pub daemon_interval_millis: u64,
}

impl OwnershipPolicy {
    pub const DEFAULT_EXPIRY_MILLIS: u64 = 24 * 60 * 60 * 1000;
    pub const DEFAULT_INTERVAL_MILLIS: u64 = 1000;

    pub fn with_coefficient(coefficient: f64) -> Self {
        OwnershipPolicy {
            coefficient,
            expiry_millis: Self::DEFAULT_EXPIRY_MILLIS,
            daemon_interval_millis: Self::DEFAULT_INTERVAL_MILLIS,
        }
    }
}

impl Default for OwnershipPolicy {
    fn default() -> Self {
        Self::with_coefficient(0.33)
    }
}

/// A constraint on [`OwnershipPolicy`] that failed validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyViolation {
    #[error("ownership coefficient H must be positive (got {0})")]
    NonPositiveCoefficient(f64),
    #[error(
        "H exceeds 1/n: starvation constraint H - 1/n <= 0 violated (H = {coefficient}, n = {nodes}, 1/n = {limit:.6})"
    )]
    CoefficientExceedsShare { coefficient: f64, nodes: usize, limit: f64 },
    #[error("expiry window must be positive")]
    ZeroExpiry,
    #[error("daemon interval must be positive")]
    ZeroInterval,
    #[error("cluster must have at least one node")]
    NoNodes,
}

/// Node membership, write-serializer designation and pairwise latency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterTopology {
    nodes: Vec<NodeId>,
    master_propagator: NodeId,
    /// Row-major `n × n`, one-way request latency in ms.
    latency_millis: Vec<Vec<u64>>,
}

impl ClusterTopology {
    pub fn new(
        nodes: Vec<NodeId>,
        master_propagator: NodeId,
        latency_millis: Vec<Vec<u64>>,
    ) -> Result<Self, ModelError> {
        let n = nodes.len();
        if n == 0 {
            return Err(ModelError::EmptyTopology);
        }
        let mut seen = BTreeSet::new();
        for node in &nodes {
            if !seen.insert(node) {
                return Err(ModelError::DuplicateNode(node.clone()));
            }
        }
        if !seen.contains(&master_propagator) {
            return Err(ModelError::UnknownPropagator(master_propagator));
        }
        if latency_millis.len() != n || latency_millis.iter().any(|row| row.len() != n) {
            return Err(ModelError::LatencyShape { n });
        }
        for (i, node) in nodes.iter().enumerate() {
            if latency_millis[i][i] != 0 {
                return Err(ModelError::NonZeroSelfLatency(node.clone()));
            }
        }
        Ok(ClusterTopology {
            nodes,
            master_propagator,
            latency_millis,
        })
    }

    /// `n` nodes named `node-1..node-n`, zero latency on the diagonal and
    /// `remote_millis` everywhere else. `node-1` is the master propagator.
    pub fn uniform(n: usize, remote_millis: u64) -> Result<Self, ModelError> {
        let nodes: Vec<NodeId> = (1..=n).map(NodeId::numbered).collect();
        let master = nodes.first().cloned().ok_or(ModelError::EmptyTopology)?;
        Self::uniform_with(nodes, master, remote_millis)
    }

    pub fn uniform_with(nodes: Vec<NodeId>, master_propagator: NodeId, remote_millis: u64) -> Result<Self, ModelError> {
        let n = nodes.len();
        let matrix = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0 } else { remote_millis }).collect())
            .collect();
        Self::new(nodes, master_propagator, matrix)
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn master_propagator(&self) -> &NodeId {
        &self.master_propagator
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.index_of(node).is_some()
    }

    pub fn index_of(&self, node: &NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| n == node)
    }

    pub fn latency(&self, from: &NodeId, to: &NodeId) -> Result<u64, ModelError> {
        let i = self
            .index_of(from)
            .ok_or_else(|| ModelError::UnknownNode(from.clone()))?;
        let j = self.index_of(to).ok_or_else(|| ModelError::UnknownNode(to.clone()))?;
        Ok(self.latency_millis[i][j])
    }

    /// The member of `candidates` closest to `from`, ties broken by the
    /// lexicographically smallest id.
    pub fn nearest<'a, I>(&self, from: &NodeId, candidates: I) -> Option<NodeId>
    where
        I: IntoIterator<Item = &'a NodeId>,
    {
        candidates
            .into_iter()
            .filter_map(|c| self.latency(from, c).ok().map(|l| (l, c)))
            .min()
            .map(|(_, c)| c.clone())
    }
}

/// Share of `meta`'s accesses contributed by `node`.
///
/// Zero when the key has never been accessed or `node` never accessed it.
pub fn ownership_fraction(meta: &KeyMetadata, node: &NodeId) -> f64 {
    if meta.total_access_count == 0 {
        return 0.0;
    }
    meta.accesses_by(node) as f64 / meta.total_access_count as f64
}

/// Accessors whose ownership fraction reaches the coefficient.
///
/// The comparison is exact: a fraction equal to `H` is eligible.
pub fn eligible_owners(meta: &KeyMetadata, policy: &OwnershipPolicy) -> BTreeSet<NodeId> {
    meta.host_accesses
        .keys()
        .filter(|node| ownership_fraction(meta, node) - policy.coefficient >= 0.0)
        .cloned()
        .collect()
}

/// Checks `0 < H <= 1/n` and that both time windows are positive.
pub fn validate_policy(policy: &OwnershipPolicy, topology: &ClusterTopology) -> Result<(), PolicyViolation> {
    validate_policy_for(policy, topology.len())
}

/// [`validate_policy`] when only the node count is known.
pub fn validate_policy_for(policy: &OwnershipPolicy, nodes: usize) -> Result<(), PolicyViolation> {
    if nodes == 0 {
        return Err(PolicyViolation::NoNodes);
    }
    let h = policy.coefficient;
    if h.is_nan() || h <= 0.0 {
        return Err(PolicyViolation::NonPositiveCoefficient(h));
    }
    let limit = 1.0 / nodes as f64;
    if h - limit > 0.0 {
        return Err(PolicyViolation::CoefficientExceedsShare {
            coefficient: h,
            nodes,
            limit,
        });
    }
    if policy.expiry_millis == 0 {
        return Err(PolicyViolation::ZeroExpiry);
    }
    if policy.daemon_interval_millis == 0 {
        return Err(PolicyViolation::ZeroInterval);
    }
    Ok(())
}
