//! The placement daemon.
//!
//! A pass takes a metadata snapshot, plans per key which nodes gain a
//! replica, which lose one and which keys expire ([`placement_pass`]), then
//! enforces that plan on the data layer ([`apply_plan`]).

use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::metadata::AccessSink;
use crate::model::{
    eligible_owners, ownership_fraction, validate_policy, KeyMetadata, NodeId, OwnershipPolicy, PolicyViolation,
};
use crate::node::{Cluster, NodeError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KeyPlan {
    pub new_hosts: BTreeSet<NodeId>,
    pub obsolete_hosts: BTreeSet<NodeId>,
    pub final_hosts: BTreeSet<NodeId>,
}

/// Output of one planning step. Only keys whose placement changes appear
/// in `per_key`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlacementPlan {
    pub per_key: BTreeMap<String, KeyPlan>,
    pub expired: BTreeSet<String>,
    pub computed_at: u64,
}

impl PlacementPlan {
    pub fn is_empty(&self) -> bool {
        self.per_key.is_empty() && self.expired.is_empty()
    }
}

/// Plans placement for every key in `snapshot`.
///
/// A key expires when `now - lastAccessedDate > expiryMillis`. Otherwise the
/// eligible accessors become owners and every current host that is not an
/// owner is evicted. Keys that were never accessed keep their placement.
pub fn placement_pass(snapshot: &[(String, KeyMetadata)], policy: &OwnershipPolicy, now: u64) -> PlacementPlan {
    let mut plan = PlacementPlan {
        computed_at: now,
        ..Default::default()
    };
    for (key, meta) in snapshot {
        if now.saturating_sub(meta.last_accessed_date) > policy.expiry_millis {
            plan.expired.insert(key.clone());
            continue;
        }
        if meta.total_access_count == 0 {
            continue;
        }
        if let Some(key_plan) = plan_key(meta, policy) {
            plan.per_key.insert(key.clone(), key_plan);
        }
    }
    plan
}

fn plan_key(meta: &KeyMetadata, policy: &OwnershipPolicy) -> Option<KeyPlan> {
    let owners = eligible_owners(meta, policy);
    let below: BTreeSet<NodeId> = meta
        .host_accesses
        .keys()
        .filter(|n| ownership_fraction(meta, n) < policy.coefficient)
        .cloned()
        .collect();

    let new_hosts: BTreeSet<NodeId> = owners.difference(&meta.hosts).cloned().collect();
    let mut obsolete_hosts: BTreeSet<NodeId> = meta.hosts.intersection(&below).cloned().collect();
    if !owners.is_empty() {
        // Hosts that never accessed the key have a zero share.
        obsolete_hosts.extend(
            meta.hosts
                .iter()
                .filter(|h| !meta.host_accesses.contains_key(*h) && !owners.contains(*h))
                .cloned(),
        );
    }
    let final_hosts: BTreeSet<NodeId> = meta
        .hosts
        .union(&new_hosts)
        .filter(|h| !obsolete_hosts.contains(*h))
        .cloned()
        .collect();

    if final_hosts.is_empty() || (new_hosts.is_empty() && obsolete_hosts.is_empty()) {
        return None;
    }
    Some(KeyPlan {
        new_hosts,
        obsolete_hosts,
        final_hosts,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ApplyReport {
    pub replications: u64,
    pub evictions: u64,
    pub expirations: u64,
    pub failures: u64,
    pub failed_keys: Vec<String>,
}

impl ApplyReport {
    fn fail(&mut self, key: &str, err: &NodeError) {
        log::warn!("placement of {key:?} failed: {err}");
        self.failures += 1;
        self.failed_keys.push(key.to_owned());
    }
}

/// Enforces `plan` on `cluster`.
///
/// Per key: copy to every new host, then switch the metadata host set, then
/// delete obsolete replicas. A failed copy rolls back the copies already
/// made and leaves the key untouched for the next pass. Expired keys lose
/// their metadata first and their replicas second.
pub fn apply_plan(cluster: &Cluster, plan: &PlacementPlan) -> ApplyReport {
    let mut report = ApplyReport::default();

    for (key, key_plan) in &plan.per_key {
        let _guard = cluster.lock_key(key);
        let Some(current) = cluster.metadata().hosts(key) else {
            continue;
        };
        match replicate(cluster, key, &current, &key_plan.new_hosts) {
            Ok(copied) => report.replications += copied,
            Err(err) => {
                report.fail(key, &err);
                continue;
            }
        }
        if let Err(err) = cluster.metadata().set_hosts(key, key_plan.final_hosts.clone()) {
            report.fail(key, &err.into());
            continue;
        }
        for host in &key_plan.obsolete_hosts {
            if !cluster.is_reachable(host) {
                report.fail(key, &NodeError::Unreachable(host.clone()));
                continue;
            }
            match cluster.backend(host) {
                Ok(b) => {
                    b.delete(key);
                    report.evictions += 1;
                }
                Err(err) => report.fail(key, &err),
            }
        }
    }

    for key in &plan.expired {
        let _guard = cluster.lock_key(key);
        let Some(hosts) = cluster.metadata().hosts(key) else {
            continue;
        };
        cluster.metadata().delete(key);
        for host in &hosts {
            if let Ok(b) = cluster.backend(host) {
                b.delete(key);
            }
        }
        report.expirations += 1;
    }
    report
}

fn replicate(
    cluster: &Cluster,
    key: &str,
    current: &BTreeSet<NodeId>,
    new_hosts: &BTreeSet<NodeId>,
) -> Result<u64, NodeError> {
    let mut copied: Vec<&NodeId> = Vec::new();
    let result = (|| {
        for dest in new_hosts.iter().filter(|d| !current.contains(*d)) {
            let sources: Vec<&NodeId> = current.iter().filter(|h| cluster.is_reachable(h)).collect();
            let source = cluster
                .topology()
                .nearest(dest, sources)
                .ok_or_else(|| NodeError::NoReachableHost(key.to_owned()))?;
            if !cluster.is_reachable(dest) {
                return Err(NodeError::Unreachable(dest.clone()));
            }
            let value = cluster
                .backend(&source)?
                .get(key)
                .ok_or_else(|| NodeError::Divergence {
                    key: key.to_owned(),
                    node: source.clone(),
                })?;
            cluster.backend(dest)?.put(key, value)?;
            copied.push(dest);
        }
        Ok(copied.len() as u64)
    })();
    if result.is_err() {
        for dest in copied {
            if let Ok(b) = cluster.backend(dest) {
                b.delete(key);
            }
        }
    }
    result
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PassReport {
    pub at_millis: u64,
    pub planned_keys: usize,
    pub apply: ApplyReport,
}

/// One full cycle: make pending access events visible, snapshot, plan, apply.
pub fn run_pass(cluster: &Cluster, policy: &OwnershipPolicy, now: u64) -> PassReport {
    cluster.recorder().flush();
    let snapshot = cluster.metadata().scan();
    let plan = placement_pass(&snapshot, policy, now);
    let apply = apply_plan(cluster, &plan);
    PassReport {
        at_millis: now,
        planned_keys: plan.per_key.len() + plan.expired.len(),
        apply,
    }
}

/// Daemon scheduled against simulated time. Passes fire at `start +
/// k × interval` for `k = 1, 2, …`.
#[derive(Debug, Clone)]
pub struct PlacementDaemon {
    policy: OwnershipPolicy,
    next_pass_at: u64,
    passes: u64,
}

impl PlacementDaemon {
    pub fn new(policy: OwnershipPolicy, cluster: &Cluster, start_millis: u64) -> Result<Self, PolicyViolation> {
        validate_policy(&policy, cluster.topology())?;
        Ok(PlacementDaemon {
            policy,
            next_pass_at: start_millis + policy.daemon_interval_millis,
            passes: 0,
        })
    }

    pub fn policy(&self) -> &OwnershipPolicy {
        &self.policy
    }

    pub fn passes(&self) -> u64 {
        self.passes
    }

    pub fn next_pass_at(&self) -> u64 {
        self.next_pass_at
    }

    /// Runs every pass due at or before `now`, each at its scheduled time.
    pub fn advance_to(&mut self, cluster: &Cluster, now: u64) -> Vec<PassReport> {
        let mut reports = Vec::new();
        while self.next_pass_at <= now {
            reports.push(self.run_due(cluster));
        }
        reports
    }

    /// Runs the next scheduled pass regardless of the current time.
    pub fn run_due(&mut self, cluster: &Cluster) -> PassReport {
        let at = self.next_pass_at;
        let report = run_pass(cluster, &self.policy, at);
        self.passes += 1;
        self.next_pass_at += self.policy.daemon_interval_millis;
        report
    }
}

/// A daemon running on its own thread against the cluster's clock, sleeping
/// the interval in real time between passes.
pub struct DaemonHandle {
    stop: Option<mpsc::Sender<()>>,
    thread: Option<JoinHandle<u64>>,
}

impl DaemonHandle {
    /// Stops the daemon after any in-flight pass; returns the pass count.
    pub fn stop(mut self) -> u64 {
        self.shutdown()
    }

    fn shutdown(&mut self) -> u64 {
        self.stop.take();
        self.thread.take().and_then(|t| t.join().ok()).unwrap_or(0)
    }
}

impl Drop for DaemonHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn spawn_daemon(cluster: Arc<Cluster>, policy: OwnershipPolicy) -> Result<DaemonHandle, PolicyViolation> {
    validate_policy(&policy, cluster.topology())?;
    let (tx, rx) = mpsc::channel::<()>();
    let interval = Duration::from_millis(policy.daemon_interval_millis);
    let thread = std::thread::Builder::new()
        .name("placement-daemon".into())
        .spawn(move || {
            let mut passes = 0;
            while let Err(mpsc::RecvTimeoutError::Timeout) = rx.recv_timeout(interval) {
                let report = run_pass(&cluster, &policy, cluster.clock().now_millis());
                if report.apply.failures > 0 {
                    log::warn!("pass {passes} finished with {} failures", report.apply.failures);
                }
                passes += 1;
            }
            passes
        })
        .expect("spawn daemon thread");
    Ok(DaemonHandle {
        stop: Some(tx),
        thread: Some(thread),
    })
}
