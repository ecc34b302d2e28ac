//! Brute-force placement oracle and random instance generation, shared by
//! the integration tests and the acceptance runner.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};
use redynis::{KeyMetadata, NodeId, OwnershipPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OracleKey {
    pub add: BTreeSet<NodeId>,
    pub remove: BTreeSet<NodeId>,
    pub hosts_after: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OraclePlan {
    pub changed: BTreeMap<String, OracleKey>,
    pub expired: BTreeSet<String>,
}

/// Walks every node of a `nodes`-node cluster and decides its fate for each
/// key one at a time.
pub fn oracle_pass(nodes: usize, snapshot: &[(String, KeyMetadata)], policy: &OwnershipPolicy, now: u64) -> OraclePlan {
    let mut plan = OraclePlan::default();
    for (key, meta) in snapshot {
        let idle = now.saturating_sub(meta.last_accessed_date);
        if idle > policy.expiry_millis {
            plan.expired.insert(key.clone());
            continue;
        }
        let total: u64 = meta.host_accesses.values().sum();
        if total == 0 {
            continue;
        }
        let mut entry = OracleKey::default();
        for i in 1..=nodes {
            let node = NodeId::numbered(i);
            let count = meta.host_accesses.get(&node).copied().unwrap_or(0);
            let owns = count as f64 / total as f64 >= policy.coefficient;
            let hosts = meta.hosts.contains(&node);
            if owns && !hosts {
                entry.add.insert(node.clone());
            }
            if hosts && !owns {
                entry.remove.insert(node.clone());
            }
            if owns {
                entry.hosts_after.insert(node);
            }
        }
        if !entry.add.is_empty() || !entry.remove.is_empty() {
            plan.changed.insert(key.clone(), entry);
        }
    }
    plan
}

pub fn to_oracle_form(plan: &redynis::PlacementPlan) -> OraclePlan {
    OraclePlan {
        changed: plan
            .per_key
            .iter()
            .map(|(k, p)| {
                (
                    k.clone(),
                    OracleKey {
                        add: p.new_hosts.clone(),
                        remove: p.obsolete_hosts.clone(),
                        hosts_after: p.final_hosts.clone(),
                    },
                )
            })
            .collect(),
        expired: plan.expired.clone(),
    }
}

/// One random instance: a cluster size, a policy with `0 < H <= 1/n`, a
/// snapshot of at most `max_keys` keys, and an evaluation time.
pub struct Instance {
    pub nodes: usize,
    pub policy: OwnershipPolicy,
    pub snapshot: Vec<(String, KeyMetadata)>,
    pub now: u64,
}

pub fn random_instance(rng: &mut impl RngCore, max_nodes: usize, max_keys: usize, max_count: u64) -> Instance {
    let nodes = rng.random_range(1..=max_nodes);
    let share = 1.0 / nodes as f64;
    // Boundary values are over-represented on purpose.
    let coefficient = match rng.random_range(0..4) {
        0 => share,
        1 => share / 2.0,
        _ => rng.random_range(0.01..=1.0) * share,
    };
    let expiry = rng.random_range(1..=1_000u64);
    let now = 10_000u64;
    let keys = rng.random_range(0..=max_keys);
    let all: Vec<NodeId> = (1..=nodes).map(NodeId::numbered).collect();
    let snapshot = (0..keys)
        .map(|k| {
            let mut hosts: BTreeSet<NodeId> = all.iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
            if hosts.is_empty() {
                hosts.insert(all.choose(rng).unwrap().clone());
            }
            let mut host_accesses = BTreeMap::new();
            for n in &all {
                if rng.random_bool(0.7) {
                    host_accesses.insert(n.clone(), rng.random_range(0..=max_count));
                }
            }
            let offsets = [0, expiry, expiry + 1, rng.random_range(0..=2 * expiry)];
            let last = now - *offsets.choose(rng).unwrap();
            let meta = KeyMetadata {
                total_access_count: host_accesses.values().sum(),
                hosts,
                host_accesses,
                last_accessed_date: last,
            };
            (format!("k{k}"), meta)
        })
        .collect();
    Instance {
        nodes,
        policy: OwnershipPolicy {
            coefficient,
            expiry_millis: expiry,
            daemon_interval_millis: 1_000,
        },
        snapshot,
        now,
    }
}

/// Metadata for a key accessed only from nodes `1..=nodes` with at least one
/// access.
pub fn random_accessed(rng: &mut impl RngCore, nodes: usize, max_count: u64) -> KeyMetadata {
    let mut host_accesses: BTreeMap<NodeId, u64> = (1..=nodes)
        .map(|i| (NodeId::numbered(i), rng.random_range(0..=max_count)))
        .collect();
    if host_accesses.values().all(|&c| c == 0) {
        host_accesses.insert(NodeId::numbered(rng.random_range(1..=nodes)), 1);
    }
    KeyMetadata {
        total_access_count: host_accesses.values().sum(),
        hosts: BTreeSet::from([NodeId::numbered(1)]),
        host_accesses,
        last_accessed_date: 0,
    }
}

/// The 17-access listing: 9/3/5 split, replicas on node-1 and node-3.
pub fn worked_example() -> KeyMetadata {
    KeyMetadata {
        total_access_count: 17,
        hosts: BTreeSet::from([NodeId::numbered(1), NodeId::numbered(3)]),
        host_accesses: BTreeMap::from([
            (NodeId::numbered(1), 9),
            (NodeId::numbered(2), 3),
            (NodeId::numbered(3), 5),
        ]),
        last_accessed_date: 1_480_725_771_235,
    }
}
