//! Serves two nodes of an in-process cluster over HTTP, writes through one
//! and reads through the other.
//!
//! `cargo run --example http_node`

use std::sync::Arc;

use redynis::http::serve_http;
use redynis::{Cluster, ClusterTopology, NodeId, WallClock};

#[tokio::main]
async fn main() {
    let topology = ClusterTopology::uniform(2, 0).unwrap();
    let cluster = Arc::new(Cluster::new(topology, Arc::new(WallClock), Default::default()));
    let mut addrs = Vec::new();
    for i in 1..=2 {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        addrs.push(listener.local_addr().unwrap());
        let service = cluster.node(NodeId::numbered(i)).unwrap();
        tokio::spawn(serve_http(service, listener, std::future::pending()));
    }
    println!("node-1 on {}, node-2 on {}", addrs[0], addrs[1]);

    let client = reqwest::Client::new();
    let put = client
        .put(format!("http://{}/kv/session", addrs[0]))
        .body("abc")
        .send()
        .await
        .unwrap();
    println!("PUT via node-1: {} {}", put.status(), put.text().await.unwrap());
    let get = client
        .get(format!("http://{}/kv/session", addrs[1]))
        .send()
        .await
        .unwrap();
    let (status, served_by) = (get.status(), get.headers()["x-served-by"].clone());
    println!(
        "GET via node-2: {status} served by {served_by:?}, body {:?}",
        get.text().await.unwrap()
    );
    let meta = client
        .get(format!("http://{}/meta/session", addrs[1]))
        .send()
        .await
        .unwrap();
    println!("metadata: {}", meta.text().await.unwrap());
}
