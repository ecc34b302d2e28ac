//! Per-node value storage.
//!
//! [`KvBackend`] is the data-layer contract; [`MemoryBackend`] is the bundled
//! in-memory implementation. Expiry is not handled here, the placement daemon
//! owns it.

use std::collections::HashMap;

use parking_lot::RwLock;
use thiserror::Error;

/// Opaque value bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct StoredValue(Vec<u8>);

impl StoredValue {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        StoredValue(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<&str> for StoredValue {
    fn from(s: &str) -> Self {
        StoredValue(s.as_bytes().to_vec())
    }
}

impl From<String> for StoredValue {
    fn from(s: String) -> Self {
        StoredValue(s.into_bytes())
    }
}

impl From<Vec<u8>> for StoredValue {
    fn from(v: Vec<u8>) -> Self {
        StoredValue(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("value of {size} bytes exceeds the configured maximum of {max} bytes")]
    ValueTooLarge { size: usize, max: usize },
    #[error("store holds {max} keys; refusing to insert more")]
    TooManyKeys { max: usize },
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

/// A single node's key-value store.
pub trait KvBackend: Send + Sync {
    fn get(&self, key: &str) -> Option<StoredValue>;
    fn put(&self, key: &str, value: StoredValue) -> Result<(), BackendError>;
    /// Returns whether the key was present.
    fn delete(&self, key: &str) -> bool;
    fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }
    fn keys(&self) -> Vec<String>;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Optional bounds; `None` means unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Capacity {
    pub max_value_bytes: Option<usize>,
    pub max_keys: Option<usize>,
}

#[derive(Debug, Default)]
pub struct MemoryBackend {
    map: RwLock<HashMap<String, StoredValue>>,
    capacity: Capacity,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(capacity: Capacity) -> Self {
        MemoryBackend {
            map: RwLock::default(),
            capacity,
        }
    }
}

impl KvBackend for MemoryBackend {
    fn get(&self, key: &str) -> Option<StoredValue> {
        self.map.read().get(key).cloned()
    }

    fn put(&self, key: &str, value: StoredValue) -> Result<(), BackendError> {
        if let Some(max) = self.capacity.max_value_bytes {
            if value.len() > max {
                return Err(BackendError::ValueTooLarge { size: value.len(), max });
            }
        }
        let mut map = self.map.write();
        if let Some(max) = self.capacity.max_keys {
            if map.len() >= max && !map.contains_key(key) {
                return Err(BackendError::TooManyKeys { max });
            }
        }
        map.insert(key.to_owned(), value);
        Ok(())
    }

    fn delete(&self, key: &str) -> bool {
        self.map.write().remove(key).is_some()
    }

    fn contains(&self, key: &str) -> bool {
        self.map.read().contains_key(key)
    }

    fn keys(&self) -> Vec<String> {
        let mut keys: Vec<String> = self.map.read().keys().cloned().collect();
        keys.sort();
        keys
    }

    fn len(&self) -> usize {
        self.map.read().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn read_your_write() {
        let kv = MemoryBackend::new();
        kv.put("k1", "v1".into()).unwrap();
        assert_eq!(kv.get("k1"), Some("v1".into()));
        assert_eq!(kv.get("missing"), None);
        kv.put("k1", "v2".into()).unwrap();
        assert_eq!(kv.get("k1"), Some("v2".into()));
    }

    #[test]
    fn empty_values_are_legal() {
        let kv = MemoryBackend::new();
        kv.put("k", StoredValue::default()).unwrap();
        assert_eq!(kv.get("k").map(|v| v.len()), Some(0));
    }

    #[test]
    fn value_size_bound() {
        let kv = MemoryBackend::with_capacity(Capacity {
            max_value_bytes: Some(4),
            max_keys: None,
        });
        kv.put("ok", "1234".into()).unwrap();
        assert_eq!(
            kv.put("big", "12345".into()),
            Err(BackendError::ValueTooLarge { size: 5, max: 4 })
        );
        assert!(!kv.contains("big"));
    }

    #[test]
    fn key_count_bound_allows_overwrite() {
        let kv = MemoryBackend::with_capacity(Capacity {
            max_value_bytes: None,
            max_keys: Some(1),
        });
        kv.put("a", "1".into()).unwrap();
        kv.put("a", "2".into()).unwrap();
        assert_eq!(kv.put("b", "1".into()), Err(BackendError::TooManyKeys { max: 1 }));
    }

    #[test]
    fn delete_semantics() {
        let kv = MemoryBackend::new();
        kv.put("k", "v1".into()).unwrap();
        assert!(kv.delete("k"));
        assert_eq!(kv.get("k"), None);
        assert!(!kv.delete("k"));
        kv.put("k", "v2".into()).unwrap();
        assert_eq!(kv.get("k"), Some("v2".into()));
        assert_eq!(kv.keys(), vec!["k".to_string()]);
    }
}
