//! Message counts at 100 nodes: a 10-member consensus group against flat
//! PBFT over everyone.
//!
//! cargo run --release --example message_complexity

use tpbft::sim::{baseline_pbft_mode, load_scenario, run};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = load_scenario(include_str!("../scenarios/scale-100.scenario"))?;
    let t = run(&cfg)?;
    let b = baseline_pbft_mode(&cfg)?;
    println!("{:<14}{:>12}{:>12}", "", "T-PBFT", "flat PBFT");
    println!("{:<14}{:>12}{:>12}", "total", t.messages_total, b.messages_total);
    for kind in t.messages_by_kind.keys() {
        let (x, y) = (t.messages_by_kind[kind], b.messages_by_kind[kind]);
        if x + y > 0 {
            println!("{kind:<14}{x:>12}{y:>12}");
        }
    }
    let cg = t.rounds[0].cg_size;
    println!(
        "\nper round {} vs {}; bound 4*|CG|^2 = {}",
        t.messages_total / cfg.rounds,
        b.messages_total / cfg.rounds,
        4 * cg * cg
    );
    Ok(())
}
