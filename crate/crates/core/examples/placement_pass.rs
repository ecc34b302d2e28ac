//! Plans one placement pass over a metadata snapshot and prints the plan as
//! JSON, the same shape as `redynis daemon-pass`.
//!
//! `cargo run --example placement_pass`

use std::collections::{BTreeMap, BTreeSet};

use redynis::{placement_pass, KeyMetadata, NodeId, OwnershipPolicy};

fn meta(counts: &[(usize, u64)], hosts: &[usize], last: u64) -> KeyMetadata {
    let host_accesses: BTreeMap<NodeId, u64> = counts.iter().map(|&(n, c)| (NodeId::numbered(n), c)).collect();
    KeyMetadata {
        total_access_count: host_accesses.values().sum(),
        hosts: hosts.iter().map(|&n| NodeId::numbered(n)).collect::<BTreeSet<_>>(),
        host_accesses,
        last_accessed_date: last,
    }
}

fn main() {
    let now = 100_000;
    let snapshot = vec![
        ("profile".to_string(), meta(&[(1, 9), (2, 3), (3, 5)], &[1, 3], now)),
        ("feed".to_string(), meta(&[(1, 10), (2, 10)], &[3], now)),
        ("untouched".to_string(), meta(&[], &[3], now)),
        ("stale".to_string(), meta(&[(2, 4)], &[2], 0)),
    ];
    let policy = OwnershipPolicy {
        expiry_millis: 60_000,
        ..OwnershipPolicy::default()
    };
    let plan = placement_pass(&snapshot, &policy, now);
    println!("{}", serde_json::to_string_pretty(&plan).unwrap());
}
