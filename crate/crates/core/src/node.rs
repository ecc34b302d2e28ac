//! Request handling for every node of a cluster: fetch, store, and the
//! master propagator's write serialization.
//!
//! A [`Cluster`] owns the per-node backends, the shared metadata layer, the
//! access recorder and the latency model. [`NodeService`] is one node's view
//! of it and is what the HTTP layer wraps.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, MutexGuard, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, Capacity, KvBackend, MemoryBackend, StoredValue};
use crate::clock::Clock;
use crate::metadata::{AccessEvent, AccessSink, AsyncRecorder, InlineRecorder, MetadataError, MetadataStore};
use crate::model::{ClusterTopology, KeyMetadata, ModelError, NodeId};

#[derive(Debug, Error)]
pub enum NodeError {
    #[error(transparent)]
    Topology(#[from] ModelError),
    #[error("node {0} is unreachable")]
    Unreachable(NodeId),
    #[error("metadata lists {node} as a host of {key:?} but its store has no value")]
    Divergence { key: String, node: NodeId },
    #[error("no reachable host for {0:?}")]
    NoReachableHost(String),
    #[error("metadata for {0:?} disappeared mid-request")]
    KeyVanished(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Metadata(#[from] MetadataError),
}

/// Whether latency charges are only reported or also slept off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyMode {
    /// Charges are returned to the caller, which owns simulated time.
    #[default]
    Account,
    /// Each remote hop sleeps for its latency.
    Sleep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recording {
    #[default]
    Async,
    Inline,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClusterOptions {
    pub latency_mode: LatencyMode,
    pub recording: Recording,
    pub capacity: Capacity,
    /// Keep every serialized write in the propagator's arrival log.
    pub arrival_log: bool,
}

pub enum Recorder {
    Inline(InlineRecorder),
    Async(AsyncRecorder),
}

impl Recorder {
    pub fn as_async(&self) -> Option<&AsyncRecorder> {
        match self {
            Recorder::Async(r) => Some(r),
            Recorder::Inline(_) => None,
        }
    }
}

impl AccessSink for Recorder {
    fn submit(&self, event: AccessEvent) {
        match self {
            Recorder::Inline(r) => r.submit(event),
            Recorder::Async(r) => r.submit(event),
        }
    }

    fn flush(&self) {
        match self {
            Recorder::Inline(r) => r.flush(),
            Recorder::Async(r) => r.flush(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResult {
    pub value: Option<StoredValue>,
    pub served_by: NodeId,
    pub remote: bool,
    pub latency_millis: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StorePath {
    LocalOnly,
    SerializerDirect,
    SerializerRelayed,
    Created,
}

impl StorePath {
    pub fn as_str(&self) -> &'static str {
        match self {
            StorePath::LocalOnly => "local-only",
            StorePath::SerializerDirect => "serializer-direct",
            StorePath::SerializerRelayed => "serializer-relayed",
            StorePath::Created => "created",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreResult {
    pub success: bool,
    pub path: StorePath,
    /// Relay hop plus the slowest replica write of the fan-out.
    pub latency_millis: u64,
    pub error: Option<String>,
}

/// One write as seen by the master propagator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arrival {
    pub key: String,
    pub origin: NodeId,
    pub value: StoredValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Diagnostics {
    pub divergences: u64,
    pub failed_stores: u64,
    pub dropped_access_events: u64,
}

const LOCK_STRIPES: usize = 64;

struct KeyLocks {
    stripes: Vec<Mutex<()>>,
}

impl KeyLocks {
    fn new() -> Self {
        KeyLocks {
            stripes: (0..LOCK_STRIPES).map(|_| Mutex::new(())).collect(),
        }
    }

    fn lock(&self, key: &str) -> MutexGuard<'_, ()> {
        let mut h = DefaultHasher::new();
        key.hash(&mut h);
        self.stripes[(h.finish() as usize) % LOCK_STRIPES].lock()
    }
}

pub struct Cluster {
    topology: ClusterTopology,
    backends: Vec<Arc<dyn KvBackend>>,
    metadata: Arc<MetadataStore>,
    recorder: Recorder,
    clock: Arc<dyn Clock>,
    latency_mode: LatencyMode,
    key_locks: KeyLocks,
    unreachable: RwLock<BTreeSet<NodeId>>,
    arrivals: Option<Mutex<Vec<Arrival>>>,
    divergences: AtomicU64,
    failed_stores: AtomicU64,
}

impl Cluster {
    pub fn new(topology: ClusterTopology, clock: Arc<dyn Clock>, options: ClusterOptions) -> Self {
        let backends = topology
            .nodes()
            .iter()
            .map(|_| Arc::new(MemoryBackend::with_capacity(options.capacity)) as Arc<dyn KvBackend>)
            .collect();
        Self::with_backends(topology, clock, options, backends)
    }

    /// `backends[i]` serves `topology.nodes()[i]`.
    pub fn with_backends(
        topology: ClusterTopology,
        clock: Arc<dyn Clock>,
        options: ClusterOptions,
        backends: Vec<Arc<dyn KvBackend>>,
    ) -> Self {
        assert_eq!(backends.len(), topology.len(), "one backend per node");
        let metadata = Arc::new(MetadataStore::new());
        let recorder = match options.recording {
            Recording::Inline => Recorder::Inline(InlineRecorder::new(Arc::clone(&metadata))),
            Recording::Async => Recorder::Async(AsyncRecorder::spawn(Arc::clone(&metadata))),
        };
        Cluster {
            topology,
            backends,
            metadata,
            recorder,
            clock,
            latency_mode: options.latency_mode,
            key_locks: KeyLocks::new(),
            unreachable: RwLock::default(),
            arrivals: options.arrival_log.then(|| Mutex::new(Vec::new())),
            divergences: AtomicU64::new(0),
            failed_stores: AtomicU64::new(0),
        }
    }

    pub fn topology(&self) -> &ClusterTopology {
        &self.topology
    }

    pub fn metadata(&self) -> &MetadataStore {
        &self.metadata
    }

    pub fn recorder(&self) -> &Recorder {
        &self.recorder
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    pub fn backend(&self, node: &NodeId) -> Result<&dyn KvBackend, NodeError> {
        let i = self
            .topology
            .index_of(node)
            .ok_or_else(|| ModelError::UnknownNode(node.clone()))?;
        Ok(self.backends[i].as_ref())
    }

    pub fn node(self: &Arc<Self>, id: NodeId) -> Result<NodeService, NodeError> {
        if !self.topology.contains(&id) {
            return Err(ModelError::UnknownNode(id).into());
        }
        Ok(NodeService {
            cluster: Arc::clone(self),
            id,
        })
    }

    /// Serializes placement changes and writes on one key.
    pub(crate) fn lock_key(&self, key: &str) -> MutexGuard<'_, ()> {
        self.key_locks.lock(key)
    }

    /// Fault injection: requests to `node` from any other node fail.
    pub fn set_reachable(&self, node: &NodeId, reachable: bool) {
        let mut set = self.unreachable.write();
        if reachable {
            set.remove(node);
        } else {
            set.insert(node.clone());
        }
    }

    pub fn is_reachable(&self, node: &NodeId) -> bool {
        !self.unreachable.read().contains(node)
    }

    /// Charges one request from `from` to `to`.
    pub(crate) fn hop(&self, from: &NodeId, to: &NodeId) -> Result<u64, NodeError> {
        let latency = self.topology.latency(from, to)?;
        if from != to && !self.is_reachable(to) {
            return Err(NodeError::Unreachable(to.clone()));
        }
        if self.latency_mode == LatencyMode::Sleep && latency > 0 {
            std::thread::sleep(std::time::Duration::from_millis(latency));
        }
        Ok(latency)
    }

    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            divergences: self.divergences.load(Ordering::Relaxed),
            failed_stores: self.failed_stores.load(Ordering::Relaxed),
            dropped_access_events: self.metadata.dropped_events(),
        }
    }

    pub fn arrivals(&self) -> Vec<Arrival> {
        self.arrivals.as_ref().map(|a| a.lock().clone()).unwrap_or_default()
    }

    /// Places `value` on every node in `hosts` and installs fresh metadata,
    /// bypassing the request path. For harness seeding.
    pub fn seed(&self, key: &str, value: StoredValue, hosts: &BTreeSet<NodeId>) -> Result<(), NodeError> {
        for host in hosts {
            self.backend(host)?.put(key, value.clone())?;
        }
        let mut meta = KeyMetadata::created(
            hosts
                .iter()
                .next()
                .cloned()
                .ok_or_else(|| MetadataError::EmptyHosts(key.into()))?,
            self.clock.now_millis(),
        );
        meta.hosts = hosts.clone();
        self.metadata.put(key, meta)?;
        Ok(())
    }

    /// Every node's store contents, sorted.
    pub fn placement(&self) -> BTreeMap<NodeId, Vec<String>> {
        self.topology
            .nodes()
            .iter()
            .zip(&self.backends)
            .map(|(n, b)| (n.clone(), b.keys()))
            .collect()
    }

    /// Serves a read at `handler`.
    pub fn fetch(&self, handler: &NodeId, key: &str) -> Result<FetchResult, NodeError> {
        if !self.topology.contains(handler) {
            return Err(ModelError::UnknownNode(handler.clone()).into());
        }
        let Some(hosts) = self.metadata.hosts(key) else {
            return Ok(FetchResult {
                value: None,
                served_by: handler.clone(),
                remote: false,
                latency_millis: 0,
            });
        };
        let (served_by, latency) = if hosts.contains(handler) {
            (handler.clone(), 0)
        } else {
            let reachable: Vec<&NodeId> = hosts.iter().filter(|h| self.is_reachable(h)).collect();
            let owner = self
                .topology
                .nearest(handler, reachable)
                .ok_or_else(|| NodeError::NoReachableHost(key.to_owned()))?;
            let latency = self.hop(handler, &owner)?;
            (owner, latency)
        };
        let Some(value) = self.backend(&served_by)?.get(key) else {
            self.divergences.fetch_add(1, Ordering::Relaxed);
            return Err(NodeError::Divergence {
                key: key.to_owned(),
                node: served_by,
            });
        };
        self.recorder.submit(AccessEvent {
            key: key.to_owned(),
            accessor: handler.clone(),
            at_millis: self.clock.now_millis(),
        });
        Ok(FetchResult {
            remote: served_by != *handler,
            value: Some(value),
            served_by,
            latency_millis: latency,
        })
    }

    /// Serves a write at `handler`. Failures are reported in the result, not
    /// as `Err`; only an unknown handler is an error.
    pub fn store(&self, handler: &NodeId, key: &str, value: StoredValue) -> Result<StoreResult, NodeError> {
        if !self.topology.contains(handler) {
            return Err(ModelError::UnknownNode(handler.clone()).into());
        }
        let _guard = self.lock_key(key);
        let outcome = self.store_locked(handler, key, value);
        Ok(match outcome {
            Ok((path, latency)) => StoreResult {
                success: true,
                path,
                latency_millis: latency,
                error: None,
            },
            Err((path, err)) => {
                self.failed_stores.fetch_add(1, Ordering::Relaxed);
                StoreResult {
                    success: false,
                    path,
                    latency_millis: 0,
                    error: Some(err.to_string()),
                }
            }
        })
    }

    fn store_locked(
        &self,
        handler: &NodeId,
        key: &str,
        value: StoredValue,
    ) -> Result<(StorePath, u64), (StorePath, NodeError)> {
        let meta = match self.metadata.get(key) {
            Some(meta) => meta,
            None => {
                let created = |e: NodeError| (StorePath::Created, e);
                self.backend(handler)
                    .map_err(created)?
                    .put(key, value.clone())
                    .map_err(|e| created(e.into()))?;
                match self.metadata.create(key, handler.clone(), self.clock.now_millis()) {
                    Ok(()) => return Ok((StorePath::Created, 0)),
                    Err(MetadataError::AlreadyExists(_)) => {
                        let meta = self
                            .metadata
                            .get(key)
                            .ok_or_else(|| created(NodeError::KeyVanished(key.to_owned())))?;
                        if !meta.hosts.contains(handler) {
                            self.backend(handler).map_err(created)?.delete(key);
                        }
                        meta
                    }
                    Err(e) => return Err(created(e.into())),
                }
            }
        };

        let master = self.topology.master_propagator();
        if meta.is_sole_host(handler) {
            let local = |e: NodeError| (StorePath::LocalOnly, e);
            self.backend(handler)
                .map_err(local)?
                .put(key, value)
                .map_err(|e| local(e.into()))?;
            Ok((StorePath::LocalOnly, 0))
        } else if handler == master {
            let fanout = self
                .serialize_write(handler, key, value)
                .map_err(|e| (StorePath::SerializerDirect, e))?;
            Ok((StorePath::SerializerDirect, fanout))
        } else {
            let relayed = |e: NodeError| (StorePath::SerializerRelayed, e);
            let relay = self.hop(handler, master).map_err(relayed)?;
            let fanout = self.serialize_write(handler, key, value).map_err(relayed)?;
            Ok((StorePath::SerializerRelayed, relay + fanout))
        }
    }

    /// Runs at the master propagator: re-reads the current hosts and writes
    /// every replica. Returns the slowest replica hop.
    fn serialize_write(&self, origin: &NodeId, key: &str, value: StoredValue) -> Result<u64, NodeError> {
        let master = self.topology.master_propagator();
        let hosts = self
            .metadata
            .hosts(key)
            .ok_or_else(|| NodeError::KeyVanished(key.to_owned()))?;
        if let Some(log) = &self.arrivals {
            log.lock().push(Arrival {
                key: key.to_owned(),
                origin: origin.clone(),
                value: value.clone(),
            });
        }
        let mut slowest = 0;
        for host in &hosts {
            let latency = self.hop(master, host)?;
            self.backend(host)?.put(key, value.clone())?;
            slowest = slowest.max(latency);
        }
        Ok(slowest)
    }
}

/// One node's request handler.
#[derive(Clone)]
pub struct NodeService {
    cluster: Arc<Cluster>,
    id: NodeId,
}

impl NodeService {
    pub fn id(&self) -> &NodeId {
        &self.id
    }

    pub fn cluster(&self) -> &Arc<Cluster> {
        &self.cluster
    }

    pub fn is_serializer(&self) -> bool {
        self.cluster.topology().master_propagator() == &self.id
    }

    pub fn fetch(&self, key: &str) -> Result<FetchResult, NodeError> {
        self.cluster.fetch(&self.id, key)
    }

    pub fn store(&self, key: &str, value: StoredValue) -> StoreResult {
        self.cluster
            .store(&self.id, key, value)
            .expect("service node is a cluster member")
    }

    pub fn metadata(&self, key: &str) -> Option<KeyMetadata> {
        self.cluster.metadata().get(key)
    }
}
