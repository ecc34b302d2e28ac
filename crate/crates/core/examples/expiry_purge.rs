//! Keys idle for longer than the expiry window disappear from the metadata
//! and from every replica on the next pass.
//!
//! `cargo run --example expiry_purge`

use std::collections::BTreeSet;
use std::sync::Arc;

use redynis::{run_pass, Cluster, ClusterTopology, NodeId, OwnershipPolicy, StoredValue, VirtualClock};

fn main() {
    let clock = Arc::new(VirtualClock::new());
    let cluster = Cluster::new(
        ClusterTopology::uniform(3, 100).unwrap(),
        clock.clone(),
        Default::default(),
    );
    let policy = OwnershipPolicy {
        expiry_millis: 10_000,
        ..OwnershipPolicy::default()
    };
    let hosts = BTreeSet::from([NodeId::numbered(1), NodeId::numbered(2)]);
    cluster.seed("old", StoredValue::from("x"), &hosts).unwrap();
    clock.advance_to(8_000);
    cluster.seed("recent", StoredValue::from("y"), &hosts).unwrap();

    for now in [10_000, 10_001, 18_001] {
        let report = run_pass(&cluster, &policy, now);
        println!(
            "pass at {now} ms: {} expired; stores: {:?}",
            report.apply.expirations,
            cluster.placement()
        );
    }
}
