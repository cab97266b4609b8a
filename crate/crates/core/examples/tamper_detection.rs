//! A node that forges blocks in transit. Honest replicas reject what it
//! relays, its trust collapses, and it drops out of the consensus group.
//!
//! cargo run --example tamper_detection

use tpbft::sim::{load_scenario, run};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = load_scenario(include_str!("../scenarios/tamperer.scenario"))?;
    let bad = cfg.faults[0].node;
    let m = run(&cfg)?;

    println!("{} tamper detections, {} safety violations", m.tamper_detections, m.safety_violations);
    for d in m.tamper_events.iter().take(5) {
        println!("  round {} node {} rejected {} from node {}", d.round, d.detector, d.reason, d.sender);
    }
    println!("\nepoch  trust(node {bad})  in CG");
    for snap in m.trust_trajectory.iter().take(8) {
        let in_cg = m
            .group_membership_per_epoch
            .iter()
            .filter(|g| g.epoch == snap.epoch)
            .any(|g| g.consensus_group.contains(&bad));
        println!("{:>5}  {:>14.3e}  {}", snap.epoch, snap.values[&bad], in_cg);
    }
    println!("rounds finalized: {}/{}", m.rounds_finalized, cfg.rounds);
    Ok(())
}
