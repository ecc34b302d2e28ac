//! Ownership fractions and eligibility for one key's access counts.
//!
//! `cargo run --example ownership_math`

use std::collections::{BTreeMap, BTreeSet};

use redynis::model::validate_policy_for;
use redynis::{eligible_owners, ownership_fraction, KeyMetadata, NodeId, OwnershipPolicy};

fn main() {
    let node = NodeId::numbered;
    let meta = KeyMetadata {
        total_access_count: 17,
        hosts: BTreeSet::from([node(1), node(3)]),
        host_accesses: BTreeMap::from([(node(1), 9), (node(2), 3), (node(3), 5)]),
        last_accessed_date: 0,
    };
    for h in [0.2, 0.33] {
        let policy = OwnershipPolicy::with_coefficient(h);
        println!("H = {h}");
        for n in 1..=3 {
            let f = ownership_fraction(&meta, &node(n));
            println!("  {}: f = {f:.3}", node(n));
        }
        println!("  owners: {:?}", eligible_owners(&meta, &policy));
    }
    match validate_policy_for(&OwnershipPolicy::with_coefficient(0.5), 3) {
        Ok(()) => println!("H = 0.5 accepted"),
        Err(e) => println!("H = 0.5 rejected for 3 nodes: {e}"),
    }
}
