//! The four write paths and local versus remote reads on a three-node
//! cluster, before and after a placement pass.
//!
//! `cargo run --example fetch_and_store`

use std::sync::Arc;

use redynis::{run_pass, Cluster, ClusterTopology, NodeId, OwnershipPolicy, StoredValue, VirtualClock};

fn main() {
    let node = NodeId::numbered;
    let topology = ClusterTopology::uniform(3, 100).unwrap();
    let cluster = Arc::new(Cluster::new(
        topology,
        Arc::new(VirtualClock::new()),
        Default::default(),
    ));

    let show = |who: usize, key: &str, value: &str| {
        let r = cluster.store(&node(who), key, StoredValue::from(value)).unwrap();
        println!(
            "store {key} at {}: {} ({} ms)",
            node(who),
            r.path.as_str(),
            r.latency_millis
        );
    };
    show(3, "cart", "v1");
    show(3, "cart", "v2");

    for reader in [1, 2, 1, 2, 1] {
        let r = cluster.fetch(&node(reader), "cart").unwrap();
        println!(
            "fetch cart at {}: served by {} ({} ms)",
            node(reader),
            r.served_by,
            r.latency_millis
        );
    }

    let pass = run_pass(&cluster, &OwnershipPolicy::default(), 0);
    println!(
        "pass: {} replications, {} evictions",
        pass.apply.replications, pass.apply.evictions
    );
    println!("hosts now {:?}", cluster.metadata().hosts("cart").unwrap());

    let r = cluster.fetch(&node(2), "cart").unwrap();
    println!(
        "fetch cart at node-2: served by {} ({} ms)",
        r.served_by, r.latency_millis
    );
    show(1, "cart", "v3");
    show(2, "cart", "v4");
}
