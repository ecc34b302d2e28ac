//! Runs the Local, Remote and Optimized scenarios on a skewed read-heavy
//! workload and prints the report table and pairwise comparison.
//!
//! `cargo run --release --example scenario_bench [read-percent]`

use redynis::bench::{compare_report, render_table, run_scenario, BenchConfig};
use redynis::Scenario;

fn main() {
    let read_percent = std::env::args()
        .nth(1)
        .map(|a| a.parse().expect("read percent"))
        .unwrap_or(100);
    let mut cfg = BenchConfig {
        iterations: 3,
        ..Default::default()
    };
    cfg.workload.total_requests = 20_000;
    cfg.workload.key_count = 1_000;
    cfg.workload.read_percent = read_percent;

    let reports: Vec<_> = Scenario::ALL.iter().map(|s| run_scenario(&cfg, *s).unwrap()).collect();
    print!("{}", render_table(&reports));
    println!();
    print!("{}", compare_report(&reports).unwrap().render());
}
