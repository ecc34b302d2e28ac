//! Concurrent writers on a key replicated to every node. All writes pass
//! through the serializer, so the replicas agree on the last arrival.
//!
//! `cargo run --example write_serialization`

use std::collections::BTreeSet;
use std::sync::Arc;

use redynis::node::ClusterOptions;
use redynis::{Cluster, ClusterTopology, NodeId, StoredValue, VirtualClock};

fn main() {
    let topology = ClusterTopology::uniform(3, 50).unwrap();
    let nodes = topology.nodes().to_vec();
    let options = ClusterOptions {
        arrival_log: true,
        ..Default::default()
    };
    let cluster = Arc::new(Cluster::new(topology, Arc::new(VirtualClock::new()), options));
    let all: BTreeSet<NodeId> = nodes.iter().cloned().collect();
    cluster.seed("counter", StoredValue::from("0"), &all).unwrap();

    let writers: Vec<_> = (0..30)
        .map(|w| {
            let cluster = Arc::clone(&cluster);
            let origin = nodes[w % nodes.len()].clone();
            std::thread::spawn(move || {
                cluster
                    .store(&origin, "counter", StoredValue::from(format!("{w}")))
                    .unwrap()
            })
        })
        .collect();
    let mut paths = std::collections::BTreeMap::new();
    for w in writers {
        *paths.entry(w.join().unwrap().path.as_str()).or_insert(0) += 1;
    }
    println!("write paths: {paths:?}");

    let last = cluster.arrivals().last().unwrap().clone();
    println!(
        "last serialized write: {:?} from {}",
        String::from_utf8_lossy(last.value.as_bytes()),
        last.origin
    );
    for n in &nodes {
        let v = cluster.backend(n).unwrap().get("counter").unwrap();
        println!("{n}: {:?}", String::from_utf8_lossy(v.as_bytes()));
    }
}
