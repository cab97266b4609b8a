//! Shipment temperature and humidity on the sponsor channel. Readings
//! outside 2-8 C or 30-60 %RH are found again by a trace over the chain.
//!
//! cargo run --example telemetry_trace

use tpbft::ledger::format_timestamp;
use tpbft::sim::{load_scenario, out_of_band, Mode, Simulation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = load_scenario(include_str!("../scenarios/paper-9node.scenario"))?;
    let mut sim = Simulation::new(&cfg, Mode::Tpbft)?;
    let m = sim.run_to_end()?.clone();
    let sponsor = sim.channel("sponsor").expect("sponsor channel");
    let hits = sponsor.trace(|tx| tx.telemetry().is_some_and(|t| out_of_band(&t)));

    println!("{} readings injected out of band, {} found on chain", m.telemetry_deviations_injected.len(), hits.len());
    for h in &hits {
        let t = h.tx.telemetry().expect("telemetry payload");
        println!(
            "  tx {:>4} {} block {:>2}: {:5.2} C {:5.1} %RH",
            h.tx.tx_id,
            format_timestamp(h.tx.timestamp),
            h.height,
            t.temperature_c,
            t.humidity_rh
        );
    }
    Ok(())
}
