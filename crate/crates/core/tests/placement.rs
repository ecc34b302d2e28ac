mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use redynis::bench::BenchConfig;
use redynis::metadata::AccessSink;
use redynis::sim::ReplayOptions;
use redynis::{
    apply_plan, build_cluster, eligible_owners, generate, placement_pass, run_pass, Cluster, ClusterTopology, NodeId,
    OwnershipPolicy, Scenario, SimConfig, StoredValue, VirtualClock, WorkloadConfig,
};

fn assert_stores_match_metadata(cluster: &Cluster) {
    cluster.recorder().flush();
    let mut listed: BTreeSet<String> = BTreeSet::new();
    for (key, meta) in cluster.metadata().scan() {
        let holding: BTreeSet<NodeId> = cluster
            .topology()
            .nodes()
            .iter()
            .filter(|n| cluster.backend(n).unwrap().contains(&key))
            .cloned()
            .collect();
        assert_eq!(holding, meta.hosts, "replicas of {key}");
        listed.insert(key);
    }
    for node in cluster.topology().nodes() {
        for key in cluster.backend(node).unwrap().keys() {
            assert!(listed.contains(&key), "{node} holds untracked {key}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pass_agrees_with_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_instance(&mut rng, 6, 12, 30);
        let got = common::to_oracle_form(&placement_pass(&inst.snapshot, &inst.policy, inst.now));
        prop_assert_eq!(got, common::oracle_pass(inst.nodes, &inst.snapshot, &inst.policy, inst.now));
    }

    #[test]
    fn final_hosts_are_exactly_the_owners(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_instance(&mut rng, 5, 10, 40);
        let plan = placement_pass(&inst.snapshot, &inst.policy, inst.now);
        for (key, meta) in &inst.snapshot {
            if let Some(p) = plan.per_key.get(key) {
                prop_assert_eq!(&p.final_hosts, &eligible_owners(meta, &inst.policy));
                prop_assert!(p.new_hosts.is_disjoint(&meta.hosts));
                prop_assert!(p.obsolete_hosts.is_subset(&meta.hosts));
            }
        }
    }

    #[test]
    fn applying_a_plan_keeps_stores_and_metadata_in_step(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_instance(&mut rng, 5, 10, 40);
        let topology = ClusterTopology::uniform(inst.nodes, 10).unwrap();
        let cluster = Cluster::new(topology, Arc::new(VirtualClock::new()), Default::default());
        for (key, meta) in &inst.snapshot {
            cluster.seed(key, StoredValue::from(key.as_str()), &meta.hosts).unwrap();
            cluster.metadata().put(key, meta.clone()).unwrap();
        }
        let plan = placement_pass(&cluster.metadata().scan(), &inst.policy, inst.now);
        let report = apply_plan(&cluster, &plan);
        prop_assert_eq!(report.failures, 0);
        assert_stores_match_metadata(&cluster);
        // With no new traffic a second pass finds nothing to move.
        let again = placement_pass(&cluster.metadata().scan(), &inst.policy, inst.now);
        prop_assert!(again.is_empty(), "{:?}", again);
    }
}

#[test]
fn replicas_track_metadata_after_a_mixed_run() {
    let cfg = BenchConfig::default();
    for read_percent in [100, 75, 50] {
        let mut handle = build_cluster(&SimConfig::default()).unwrap();
        let workload = WorkloadConfig {
            total_requests: 4_000,
            read_percent,
            key_count: 300,
            origin_nodes: handle.client_nodes(),
            seed: 5,
            ..Default::default()
        };
        handle
            .inject_scenario(Scenario::Optimized, &workload.keys(), &workload.preload_values())
            .unwrap();
        let requests = generate(&workload).unwrap();
        let options = ReplayOptions {
            service_cost_millis: cfg.service_cost_millis,
            policy: cfg.policy,
        };
        let trace = handle.replay(&requests, &options).unwrap();
        assert!(trace.daemon_passes > 0);
        assert!(trace.records.iter().all(|r| !r.failed && !r.missing));
        assert_stores_match_metadata(handle.cluster());
        let now = handle.now_millis();
        run_pass(handle.cluster(), &cfg.policy, now);
        assert_stores_match_metadata(handle.cluster());
    }
}

#[test]
fn sole_accessor_becomes_sole_owner_after_one_pass() {
    let topology = ClusterTopology::uniform(3, 100).unwrap();
    let cluster = Arc::new(Cluster::new(
        topology,
        Arc::new(VirtualClock::new()),
        Default::default(),
    ));
    let reader = NodeId::numbered(2);
    cluster
        .store(&NodeId::numbered(3), "k", StoredValue::from("v"))
        .unwrap();
    for _ in 0..5 {
        assert!(cluster.fetch(&reader, "k").unwrap().remote);
    }
    run_pass(&cluster, &OwnershipPolicy::default(), 0);
    assert_eq!(cluster.metadata().hosts("k").unwrap(), BTreeSet::from([reader.clone()]));
    let fetched = cluster.fetch(&reader, "k").unwrap();
    assert!(!fetched.remote);
    assert_eq!(fetched.value, Some(StoredValue::from("v")));
    assert_stores_match_metadata(&cluster);
}
