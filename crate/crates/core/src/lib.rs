//! Redynis: a replicated key-value store that moves keys toward the nodes
//! that read them.
//!
//! Each key carries per-node access counts. A node whose share of a key's
//! accesses reaches the ownership coefficient `H` becomes an owner and gets
//! a replica; hosts that fall below it lose theirs. Writes to a key with more
//! than one host are ordered through a single serializer node.
//!
//! Module map:
//!
//! - [`model`]: node ids, key metadata, ownership math, topology.
//! - [`backend`]: the per-node value store.
//! - [`metadata`]: shared access metadata and recorders.
//! - [`node`]: fetch and store request paths over a [`node::Cluster`].
//! - [`daemon`]: placement passes and their application.
//! - [`sim`]: deterministic cluster simulation in virtual time.
//! - [`workload`]: request generation and traces.
//! - [`bench`]: scenario runs, statistics and comparison.
//! - [`http`]: an axum front end for one node.
//! - [`cli`]: the `redynis` command.
//!
//! The `examples/` directory holds one runnable program per capability.

pub mod backend;
pub mod bench;
pub mod cli;
pub mod clock;
pub mod daemon;
pub mod http;
pub mod metadata;
pub mod model;
pub mod node;
pub mod sim;
pub mod workload;

pub use backend::{KvBackend, MemoryBackend, StoredValue};
pub use clock::{Clock, VirtualClock, WallClock};
pub use daemon::{apply_plan, placement_pass, run_pass, PlacementDaemon, PlacementPlan};
pub use metadata::MetadataStore;
pub use model::{eligible_owners, ownership_fraction, ClusterTopology, KeyMetadata, NodeId, OwnershipPolicy};
pub use node::{Cluster, NodeService};
pub use sim::{build_cluster, Scenario, SimConfig};
pub use workload::{generate, Distribution, WorkloadConfig};
