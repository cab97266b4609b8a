//! Consensus and primary groups from a trust vector, and what happens when
//! primary-group members fail.
//!
//! cargo run --example consensus_groups

use std::collections::BTreeSet;

use tpbft::consensus::{replace_failed_primary, select_proposer, Replacement};
use tpbft::groups::{build_consensus_group, build_primary_group, GroupConfig};
use tpbft::trust::{NodeId, TrustVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trust = TrustVector::from_values(
        [0.18, 0.05, 0.14, 0.12, 0.09, 0.16, 0.07, 0.11, 0.08]
            .into_iter()
            .enumerate()
            .map(|(k, v)| (NodeId(k as u32 + 1), v)),
    );
    let nodes: BTreeSet<NodeId> = trust.values.keys().copied().collect();

    for (s, m) in [(1.0, 0.25), (0.8, 0.25), (0.5, 0.5)] {
        let cfg = GroupConfig::new(s, m)?;
        let cg = build_consensus_group(&trust, &cfg, &nodes)?;
        let pg = build_primary_group(&cg, &trust, &cfg)?;
        println!(
            "s={s} m={m}: CG {:?} (f={}, prepare quorum {}, reply quorum {}), PG {:?}",
            cg.members.iter().map(|x| x.0).collect::<Vec<_>>(),
            cg.f,
            cg.prepare_quorum(),
            cg.reply_quorum(),
            pg.members.iter().map(|x| x.0).collect::<Vec<_>>(),
        );
    }

    let cfg = GroupConfig::new(1.0, 0.34)?;
    let cg = build_consensus_group(&trust, &cfg, &nodes)?;
    let pg = build_primary_group(&cg, &trust, &cfg)?;
    let height = 7;
    let mut failed = BTreeSet::new();
    let mut current = select_proposer(&pg, height, &failed);
    println!("\nheight {height}, PG {:?}", pg.members.iter().map(|x| x.0).collect::<Vec<_>>());
    while let Replacement::Proposer(p) = current {
        println!("  proposer {p} fails");
        current = replace_failed_primary(&pg, height, p, &mut failed);
    }
    println!("  every PG member failed: {current:?}");
    Ok(())
}
