//! Faults within and beyond the tolerated bound. Up to f liars change
//! nothing; one more lets fabricated replies reach the client.
//!
//! cargo run --example byzantine_faults

use tpbft::sim::{load_scenario, run, FaultSpec, NodeBehavior};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = load_scenario(include_str!("../scenarios/crash-primary.scenario"))?;
    cfg.group.s = 1.0;
    let plans: [(&str, Vec<(u32, NodeBehavior)>); 4] = [
        ("no faults", vec![]),
        ("crash + equivocator", vec![(1, NodeBehavior::CrashSilent), (4, NodeBehavior::Equivocator)]),
        ("tamperer + laggard", vec![(3, NodeBehavior::Tamperer), (5, NodeBehavior::Laggard(6))]),
        ("two equivocators", vec![(2, NodeBehavior::Equivocator), (4, NodeBehavior::Equivocator)]),
    ];
    println!("7 nodes, f = 2");
    for (label, plan) in plans {
        cfg.faults = plan
            .into_iter()
            .map(|(node, behavior)| FaultSpec { node, behavior, start: 0, end: u64::MAX })
            .collect();
        let m = run(&cfg)?;
        println!(
            "  {label:<22} finalized {:>2}/{}  violations {}  detections {}",
            m.rounds_finalized, cfg.rounds, m.safety_violations, m.tamper_detections
        );
    }

    let over = load_scenario(include_str!("../scenarios/byzantine-overflow.scenario"))?;
    let m = run(&over)?;
    println!("\n4 nodes (f = 1) with two equivocators: {} violations", m.safety_violations);
    for e in m.safety_events.iter().take(3) {
        println!("  round {} {}: {} ({})", e.round, e.channel, e.kind, e.detail);
    }
    Ok(())
}
