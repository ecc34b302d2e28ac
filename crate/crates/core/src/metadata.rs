//! The metadata layer: the single logical copy of every key's [`KeyMetadata`].
//!
//! Access recording is an atomic read-modify-write on one key. Scans are
//! consistent per key but not across keys.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;

use parking_lot::{Condvar, Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{KeyMetadata, NodeId};

/// One fetch of `key` handled by `accessor`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AccessEvent {
    pub key: String,
    pub accessor: NodeId,
    pub at_millis: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetadataError {
    #[error("metadata for {0:?} already exists")]
    AlreadyExists(String),
    #[error("no metadata for {0:?}")]
    UnknownKey(String),
    #[error("host set for {0:?} must not be empty")]
    EmptyHosts(String),
}

#[derive(Debug, Default)]
pub struct MetadataStore {
    entries: RwLock<HashMap<String, Mutex<KeyMetadata>>>,
    dropped_events: AtomicU64,
}

impl MetadataStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<KeyMetadata> {
        self.entries.read().get(key).map(|m| m.lock().clone())
    }

    pub fn hosts(&self, key: &str) -> Option<BTreeSet<NodeId>> {
        self.entries.read().get(key).map(|m| m.lock().hosts.clone())
    }

    /// First writer wins; a second create for the same key leaves the
    /// existing record untouched.
    pub fn create(&self, key: &str, initial_host: NodeId, at_millis: u64) -> Result<(), MetadataError> {
        let mut entries = self.entries.write();
        if entries.contains_key(key) {
            return Err(MetadataError::AlreadyExists(key.to_owned()));
        }
        entries.insert(
            key.to_owned(),
            Mutex::new(KeyMetadata::created(initial_host, at_millis)),
        );
        Ok(())
    }

    /// Installs a full record, replacing any existing one. Used for seeding.
    pub fn put(&self, key: &str, meta: KeyMetadata) -> Result<(), MetadataError> {
        if meta.hosts.is_empty() {
            return Err(MetadataError::EmptyHosts(key.to_owned()));
        }
        self.entries.write().insert(key.to_owned(), Mutex::new(meta));
        Ok(())
    }

    /// Counts the access. Events for unknown keys are dropped and tallied in
    /// [`dropped_events`](Self::dropped_events).
    pub fn record_access(&self, event: &AccessEvent) -> Result<(), MetadataError> {
        let entries = self.entries.read();
        match entries.get(&event.key) {
            Some(entry) => {
                entry.lock().record(&event.accessor, event.at_millis);
                Ok(())
            }
            None => {
                self.dropped_events.fetch_add(1, Ordering::Relaxed);
                Err(MetadataError::UnknownKey(event.key.clone()))
            }
        }
    }

    pub fn set_hosts(&self, key: &str, hosts: BTreeSet<NodeId>) -> Result<(), MetadataError> {
        if hosts.is_empty() {
            return Err(MetadataError::EmptyHosts(key.to_owned()));
        }
        let entries = self.entries.read();
        let entry = entries
            .get(key)
            .ok_or_else(|| MetadataError::UnknownKey(key.to_owned()))?;
        entry.lock().hosts = hosts;
        Ok(())
    }

    /// Idempotent.
    pub fn delete(&self, key: &str) {
        self.entries.write().remove(key);
    }

    /// Point-in-time copy of every record, sorted by key.
    pub fn scan(&self) -> Vec<(String, KeyMetadata)> {
        let entries = self.entries.read();
        let mut out: Vec<(String, KeyMetadata)> = entries.iter().map(|(k, m)| (k.clone(), m.lock().clone())).collect();
        drop(entries);
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped_events(&self) -> u64 {
        self.dropped_events.load(Ordering::Relaxed)
    }
}

/// Where the request path hands off access events.
///
/// `submit` must not block on the metadata write. `flush` returns once
/// every event submitted before the call is visible in the store.
pub trait AccessSink: Send + Sync {
    fn submit(&self, event: AccessEvent);
    fn flush(&self);
}

/// Applies events on the caller's thread. Useful in tests and tools.
pub struct InlineRecorder {
    store: Arc<MetadataStore>,
}

impl InlineRecorder {
    pub fn new(store: Arc<MetadataStore>) -> Self {
        InlineRecorder { store }
    }
}

impl AccessSink for InlineRecorder {
    fn submit(&self, event: AccessEvent) {
        let _ = self.store.record_access(&event);
    }

    fn flush(&self) {}
}

enum RecorderMsg {
    Event(AccessEvent),
    Flush(mpsc::Sender<()>),
    Shutdown,
}

#[derive(Default)]
struct Gate {
    paused: Mutex<bool>,
    cv: Condvar,
}

impl Gate {
    fn wait_open(&self) {
        let mut paused = self.paused.lock();
        while *paused {
            self.cv.wait(&mut paused);
        }
    }
}

/// Queues events to a background worker that owns the metadata writes.
pub struct AsyncRecorder {
    tx: Mutex<mpsc::Sender<RecorderMsg>>,
    gate: Arc<Gate>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl AsyncRecorder {
    pub fn spawn(store: Arc<MetadataStore>) -> Self {
        let (tx, rx) = mpsc::channel::<RecorderMsg>();
        let gate = Arc::new(Gate::default());
        let worker_gate = Arc::clone(&gate);
        let worker = std::thread::Builder::new()
            .name("access-recorder".into())
            .spawn(move || {
                for msg in rx {
                    worker_gate.wait_open();
                    match msg {
                        RecorderMsg::Event(ev) => {
                            let _ = store.record_access(&ev);
                        }
                        RecorderMsg::Flush(ack) => {
                            let _ = ack.send(());
                        }
                        RecorderMsg::Shutdown => break,
                    }
                }
            })
            .expect("spawn recorder thread");
        AsyncRecorder {
            tx: Mutex::new(tx),
            gate,
            worker: Mutex::new(Some(worker)),
        }
    }

    /// Test hook: the worker stops applying events until [`resume`](Self::resume).
    /// Do not call `flush` while paused; it would wait forever.
    pub fn pause(&self) {
        *self.gate.paused.lock() = true;
    }

    pub fn resume(&self) {
        *self.gate.paused.lock() = false;
        self.gate.cv.notify_all();
    }
}

impl AccessSink for AsyncRecorder {
    fn submit(&self, event: AccessEvent) {
        let _ = self.tx.lock().send(RecorderMsg::Event(event));
    }

    fn flush(&self) {
        let (ack_tx, ack_rx) = mpsc::channel();
        if self.tx.lock().send(RecorderMsg::Flush(ack_tx)).is_ok() {
            let _ = ack_rx.recv();
        }
    }
}

impl Drop for AsyncRecorder {
    fn drop(&mut self) {
        self.resume();
        let _ = self.tx.lock().send(RecorderMsg::Shutdown);
        if let Some(handle) = self.worker.lock().take() {
            let _ = handle.join();
        }
    }
}
