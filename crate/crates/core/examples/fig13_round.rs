//! One five-node round, message by message. Node 5 has the lowest trust and
//! stays out of the consensus group; three matching prepares are enough
//! with f = 1.
//!
//! cargo run --example fig13_round

use tpbft::sim::{load_scenario, Mode, Simulation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = include_str!("../scenarios/fig13.scenario");
    let mut cfg = load_scenario(text)?;
    cfg.rounds = 1;
    let mut sim = Simulation::new(&cfg, Mode::Tpbft)?.with_trace();
    let m = sim.run_to_end()?.clone();

    let g = &m.group_membership_per_epoch[0];
    println!("CG {:?}, PG {:?}, f = {}", g.consensus_group, g.primary_group, g.f);
    for rec in sim.trace().iter().filter(|r| r.delivered) {
        println!(
            "t={:>3} {:<10} {} -> {:<8} {}",
            rec.sim_time,
            rec.kind.to_string(),
            rec.sender,
            rec.receiver.to_string(),
            &rec.block_hash.to_hex()[..12]
        );
    }
    let r = &m.rounds[0];
    println!(
        "\nfinalized: {}, prepares counted at quorum per replica: {:?} (> 2f = {})",
        r.finalized,
        r.prepared_at,
        2 * r.f
    );
    Ok(())
}
