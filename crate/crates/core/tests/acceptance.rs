//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any
//! failure. Tolerances are pinned below.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use redynis::bench::{run_scenario, BenchConfig, BenchReport};
use redynis::metadata::{AccessEvent, AccessSink, AsyncRecorder};
use redynis::node::ClusterOptions;
use redynis::workload::WorkloadConfig;
use redynis::{
    eligible_owners, placement_pass, run_pass, Cluster, ClusterTopology, Distribution, MetadataStore, NodeId,
    OwnershipPolicy, Scenario, SimConfig, StoredValue, VirtualClock,
};

const ORACLE_INSTANCES: usize = 1_000;
const ORACLE_BUDGET: Duration = Duration::from_secs(10);
const STARVATION_CASES: usize = 10_000;
const ORDERING_READ_PCTS: [u32; 4] = [100, 90, 75, 50];
const ORDERING_REQUESTS: usize = 10_000;
const LONG_RUN_REQUESTS: usize = 100_000;
const KEY_COUNT: usize = 1_000;
const ITERATIONS: usize = 3;
const MIN_SPEEDUP: f64 = 5.0;
const MIN_PASSES: u64 = 5;
const LONG_RUN_BUDGET: Duration = Duration::from_secs(60);
const MIN_CONVERGED_HIT_RATE: f64 = 0.90;
const MIN_CONVERGED_SHARE_OF_LOCAL: f64 = 0.5;
const WRITERS: usize = 100;
const WRITE_REPETITIONS: usize = 50;
const RECORDER_THREADS: usize = 8;
const EVENTS_PER_THREAD: usize = 10_000;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bench_config(read_percent: u32, requests: usize) -> BenchConfig {
    BenchConfig {
        sim: SimConfig {
            node_count: 3,
            remote_latency_millis: 100,
            seed: 42,
            ..Default::default()
        },
        workload: WorkloadConfig {
            total_requests: requests,
            read_percent,
            distribution: Distribution::Skewed,
            key_count: KEY_COUNT,
            seed: 42,
            ..Default::default()
        },
        policy: OwnershipPolicy {
            coefficient: 0.33,
            expiry_millis: OwnershipPolicy::DEFAULT_EXPIRY_MILLIS,
            daemon_interval_millis: 1_000,
        },
        iterations: ITERATIONS,
        service_cost_millis: 1,
        converged_fraction: 0.5,
    }
}

fn oracle_agreement() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0AC1E);
    let started = Instant::now();
    let mut keys = 0;
    for i in 0..ORACLE_INSTANCES {
        let inst = common::random_instance(&mut rng, 5, 20, 50);
        keys += inst.snapshot.len();
        let got = common::to_oracle_form(&placement_pass(&inst.snapshot, &inst.policy, inst.now));
        let want = common::oracle_pass(inst.nodes, &inst.snapshot, &inst.policy, inst.now);
        if got != want {
            return Err(format!("instance {i} disagrees: got {got:?}, want {want:?}"));
        }
    }
    let elapsed = started.elapsed();
    ensure(
        elapsed < ORACLE_BUDGET,
        format!(
            "{ORACLE_INSTANCES} instances, {keys} keys, 100% agreement in {:.2?} (budget {ORACLE_BUDGET:?})",
            elapsed
        ),
    )
}

fn non_starvation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x57A2);
    for case in 0..STARVATION_CASES {
        let nodes = 1 + case % 8;
        let meta = common::random_accessed(&mut rng, nodes, 1_000);
        let policy = OwnershipPolicy::with_coefficient(1.0 / nodes as f64);
        if eligible_owners(&meta, &policy).is_empty() {
            return Err(format!("case {case}: no owner for {meta:?} at H=1/{nodes}"));
        }
    }
    Ok(format!(
        "{STARVATION_CASES} accessed keys each have an owner at H = 1/n"
    ))
}

fn worked_example() -> Check {
    let snapshot = vec![("k".to_string(), common::worked_example())];
    let now = snapshot[0].1.last_accessed_date;
    let plan = placement_pass(&snapshot, &OwnershipPolicy::with_coefficient(0.33), now);
    let p = plan.per_key.get("k").ok_or("no plan for the key")?;
    let one = BTreeSet::from([NodeId::numbered(1)]);
    let three = BTreeSet::from([NodeId::numbered(3)]);
    ensure(
        p.final_hosts == one && p.obsolete_hosts == three && p.new_hosts.is_empty(),
        format!("owners {:?}, evicted {:?}", p.final_hosts, p.obsolete_hosts),
    )
}

fn ordering() -> Check {
    let mut lines = Vec::new();
    for pct in ORDERING_READ_PCTS {
        let cfg = bench_config(pct, ORDERING_REQUESTS);
        let run = |s| run_scenario(&cfg, s).map_err(|e| e.to_string());
        let (local, remote, opt) = (run(Scenario::Local)?, run(Scenario::Remote)?, run(Scenario::Optimized)?);
        for i in 0..ITERATIONS {
            let (l, o, r) = (
                local.per_iteration[i].throughput_ops_per_sec,
                opt.per_iteration[i].throughput_ops_per_sec,
                remote.per_iteration[i].throughput_ops_per_sec,
            );
            if !(l >= o && o >= r) {
                return Err(format!(
                    "read {pct}% iteration {i}: local {l:.2}, optimized {o:.2}, remote {r:.2}"
                ));
            }
        }
        lines.push(format!(
            "{pct}%: {:.1} >= {:.1} >= {:.1}",
            local.throughput_ops_per_sec, opt.throughput_ops_per_sec, remote.throughput_ops_per_sec
        ));
    }
    Ok(format!(
        "local >= optimized >= remote in all {ITERATIONS} iterations; {}",
        lines.join(", ")
    ))
}

struct LongRun {
    local: BenchReport,
    remote: BenchReport,
    optimized: BenchReport,
    wall: Duration,
}

fn long_run() -> Result<LongRun, String> {
    let started = Instant::now();
    let cfg = bench_config(100, LONG_RUN_REQUESTS);
    let run = |s| run_scenario(&cfg, s).map_err(|e| e.to_string());
    let (local, remote, optimized) = (run(Scenario::Local)?, run(Scenario::Remote)?, run(Scenario::Optimized)?);
    Ok(LongRun {
        local,
        remote,
        optimized,
        wall: started.elapsed(),
    })
}

fn speedup(run: &LongRun) -> Check {
    let ratio = run.optimized.throughput_ops_per_sec / run.remote.throughput_ops_per_sec;
    let passes = run
        .optimized
        .per_iteration
        .iter()
        .map(|s| s.daemon_passes)
        .min()
        .unwrap_or(0);
    ensure(
        ratio >= MIN_SPEEDUP && passes >= MIN_PASSES && run.wall < LONG_RUN_BUDGET,
        format!(
            "optimized/remote = {ratio:.2} (>= {MIN_SPEEDUP}), min daemon passes {passes} (>= {MIN_PASSES}), wall {:.2?} (< {LONG_RUN_BUDGET:?})",
            run.wall
        ),
    )
}

fn near_local(run: &LongRun) -> Check {
    let hit = run.optimized.converged_local_hit_rate;
    let share = run.optimized.converged_throughput_ops_per_sec / run.local.throughput_ops_per_sec;
    ensure(
        hit >= MIN_CONVERGED_HIT_RATE && share >= MIN_CONVERGED_SHARE_OF_LOCAL,
        format!(
            "converged hit rate {hit:.4} (>= {MIN_CONVERGED_HIT_RATE}), converged throughput {share:.3} x local (>= {MIN_CONVERGED_SHARE_OF_LOCAL})"
        ),
    )
}

fn write_serialization() -> Check {
    let topology = ClusterTopology::uniform(3, 100).map_err(|e| e.to_string())?;
    let nodes: Vec<NodeId> = topology.nodes().to_vec();
    let all: BTreeSet<NodeId> = nodes.iter().cloned().collect();
    for rep in 0..WRITE_REPETITIONS {
        let options = ClusterOptions {
            arrival_log: true,
            ..Default::default()
        };
        let cluster = Arc::new(Cluster::new(topology.clone(), Arc::new(VirtualClock::new()), options));
        cluster
            .seed("shared", StoredValue::from("initial"), &all)
            .map_err(|e| e.to_string())?;
        let barrier = Arc::new(Barrier::new(WRITERS));
        let handles: Vec<_> = (0..WRITERS)
            .map(|w| {
                let cluster = Arc::clone(&cluster);
                let barrier = Arc::clone(&barrier);
                let node = nodes[w % nodes.len()].clone();
                std::thread::spawn(move || {
                    barrier.wait();
                    cluster
                        .store(&node, "shared", StoredValue::from(format!("w{w}")))
                        .map(|r| r.success)
                })
            })
            .collect();
        for h in handles {
            if !matches!(h.join().map_err(|_| "writer panicked")?, Ok(true)) {
                return Err(format!("repetition {rep}: a write failed"));
            }
        }
        let arrivals = cluster.arrivals();
        let last = arrivals.last().ok_or("empty arrival log")?;
        if arrivals.len() != WRITERS {
            return Err(format!(
                "repetition {rep}: {} arrivals for {WRITERS} writes",
                arrivals.len()
            ));
        }
        for n in &nodes {
            let got = cluster.backend(n).map_err(|e| e.to_string())?.get("shared");
            if got.as_ref() != Some(&last.value) {
                return Err(format!(
                    "repetition {rep}: {n} holds {got:?}, serializer's last is {:?}",
                    last.value
                ));
            }
        }
    }
    Ok(format!(
        "{WRITE_REPETITIONS} x {WRITERS} concurrent writers: replicas identical and equal to the last serialized write"
    ))
}

fn expiry_purge() -> Check {
    let topology = ClusterTopology::uniform(3, 100).map_err(|e| e.to_string())?;
    let clock = Arc::new(VirtualClock::starting_at(0));
    let cluster = Cluster::new(topology, clock.clone(), ClusterOptions::default());
    let both = BTreeSet::from([NodeId::numbered(1), NodeId::numbered(2)]);
    cluster
        .seed("stale", StoredValue::from("s"), &both)
        .map_err(|e| e.to_string())?;
    let policy = OwnershipPolicy {
        coefficient: 0.33,
        expiry_millis: 5_000,
        daemon_interval_millis: 1_000,
    };
    clock.advance_to(5_000);
    cluster
        .seed("edge", StoredValue::from("e"), &both)
        .map_err(|e| e.to_string())?;

    // At 10_000 "stale" has idled 10_000 ms and "edge" exactly the expiry.
    let report = run_pass(&cluster, &policy, 10_000);
    let stale_gone = cluster.metadata().get("stale").is_none()
        && both.iter().all(|n| !cluster.backend(n).unwrap().contains("stale"));
    let edge_kept_at_boundary = report.apply.expirations == 1 && cluster.metadata().get("edge").is_some();
    let report = run_pass(&cluster, &policy, 10_001);
    let edge_gone_after = report.apply.expirations == 1
        && cluster.metadata().get("edge").is_none()
        && both.iter().all(|n| !cluster.backend(n).unwrap().contains("edge"));
    ensure(
        stale_gone && edge_kept_at_boundary && edge_gone_after,
        format!(
            "idle > expiry purged from metadata and every store: {stale_gone}; idle == expiry kept: {edge_kept_at_boundary}; purged 1 ms later: {edge_gone_after}"
        ),
    )
}

fn determinism() -> Check {
    let cfg = bench_config(90, 5_000);
    let render = || -> Result<String, String> {
        let reports = Scenario::ALL
            .iter()
            .map(|s| run_scenario(&cfg, *s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        serde_json::to_string(&reports).map_err(|e| e.to_string())
    };
    let (a, b) = (render()?, render()?);
    ensure(
        a == b,
        format!("two runs with seed 42 give byte-identical reports ({} bytes)", a.len()),
    )
}

fn conservation() -> Check {
    let store = Arc::new(MetadataStore::new());
    store
        .create("counted", NodeId::numbered(1), 0)
        .map_err(|e| e.to_string())?;
    let recorder = Arc::new(AsyncRecorder::spawn(Arc::clone(&store)));
    let handles: Vec<_> = (0..RECORDER_THREADS)
        .map(|t| {
            let recorder = Arc::clone(&recorder);
            std::thread::spawn(move || {
                let accessor = NodeId::numbered(1 + t % 3);
                for i in 0..EVENTS_PER_THREAD {
                    recorder.submit(AccessEvent {
                        key: "counted".into(),
                        accessor: accessor.clone(),
                        at_millis: i as u64,
                    });
                }
            })
        })
        .collect();
    for h in handles {
        h.join().map_err(|_| "submitter panicked")?;
    }
    recorder.flush();
    let meta = store.get("counted").ok_or("key vanished")?;
    let expected = (RECORDER_THREADS * EVENTS_PER_THREAD) as u64;
    let summed: u64 = meta.host_accesses.values().sum();
    ensure(
        meta.total_access_count == expected && summed == expected,
        format!(
            "totalAccessCount {} and sum of hostAccesses {summed}, expected {expected}",
            meta.total_access_count
        ),
    )
}

fn main() {
    let long = catch_unwind(long_run).unwrap_or_else(|_| Err("panicked".into()));
    let checks: Vec<Criterion> = vec![
        ("placement matches brute-force oracle", Box::new(oracle_agreement)),
        ("accessed keys always have an owner", Box::new(non_starvation)),
        ("worked example placement", Box::new(worked_example)),
        ("scenario ordering across read mixes", Box::new(ordering)),
        (
            "optimized beats remote by the bound",
            Box::new(|| long.as_ref().map_err(Clone::clone).and_then(speedup)),
        ),
        (
            "converged optimized run is near local",
            Box::new(|| long.as_ref().map_err(Clone::clone).and_then(near_local)),
        ),
        ("concurrent writes converge on one value", Box::new(write_serialization)),
        ("expired keys are purged everywhere", Box::new(expiry_purge)),
        ("seeded runs are reproducible", Box::new(determinism)),
        ("access counts are conserved", Box::new(conservation)),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
