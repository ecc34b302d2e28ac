//! Generates a skewed workload, reports its key mass split, and round-trips
//! it through the JSON-lines trace format.
//!
//! `cargo run --example workload_trace`

use redynis::workload::{empirical_distribution, read_trace, write_trace};
use redynis::{generate, Distribution, NodeId, WorkloadConfig};

fn main() {
    let cfg = WorkloadConfig {
        total_requests: 10_000,
        read_percent: 90,
        distribution: Distribution::Skewed,
        key_count: 500,
        origin_nodes: vec![NodeId::numbered(1), NodeId::numbered(2)],
        seed: 7,
        ..Default::default()
    };
    let requests = generate(&cfg).unwrap();
    let counts = empirical_distribution(&requests);
    let hot: std::collections::BTreeSet<String> = cfg.hot_keys().into_iter().collect();
    let hot_hits: u64 = counts.iter().filter(|(k, _)| hot.contains(*k)).map(|(_, c)| *c).sum();
    println!("{} requests, {} distinct keys", requests.len(), counts.len());
    println!(
        "{} hot keys took {:.1}% of requests",
        hot.len(),
        100.0 * hot_hits as f64 / requests.len() as f64
    );

    let mut buf = Vec::new();
    write_trace(&requests, &mut buf).unwrap();
    let back = read_trace(buf.as_slice()).unwrap();
    println!("trace: {} bytes, {} requests read back", buf.len(), back.len());
    println!(
        "first line: {}",
        String::from_utf8_lossy(buf.split(|b| *b == b'\n').next().unwrap())
    );
}
