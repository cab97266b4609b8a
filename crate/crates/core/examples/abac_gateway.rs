//! The admission path for wearable data: registration, a first request that
//! generates a policy, a repeat that matches it, and a denial once the
//! patient's trust falls below the policy bar.
//!
//! cargo run --example abac_gateway

use tpbft::gateway::{request_for, Enrollment, Gateway, Registry, WdType};
use tpbft::ledger::TxKind;
use tpbft::trust::{NodeId, TrustLedger, TrustVector};

fn trust(patient: f64) -> TrustVector {
    let rest = (1.0 - patient) / 8.0;
    TrustVector::from_values((1..=9).map(|i| (NodeId(i), if i == 6 { patient } else { rest })))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut registry = Registry::new();
    registry.enroll(Enrollment {
        patient_id: "C1S1P1".into(),
        channel: "patient-enrollment".into(),
        patient_node: NodeId(6),
        pi_node: NodeId(5),
        country: "C1".into(),
        site: "S1".into(),
    });
    let mut gw = Gateway::new(registry);
    let ring = gw.register_device("C1S1P1", "WD-C1S1P1-0", WdType::OuraRing, 0)?;
    println!("registered {} in zone {} as {}", ring.device_id, ring.zone, ring.wallet.submitter());

    let mut ledger = TrustLedger::new((1..=9).map(NodeId));
    for (k, t) in [0.20, 0.25, 0.12].into_iter().enumerate() {
        let d = gw.submit(request_for(&ring, k as u64 + 1, TxKind::VitalsReading, 10 + k as u64), &trust(t))?;
        println!(
            "request {} at trust {t:.2}: {:?}, policy {}, decision {}",
            d.request_id,
            d.outcome,
            d.matched_policy.as_deref().unwrap_or("-"),
            &d.decision_hash.to_hex()[..12]
        );
        // Granted decisions count once they are on the ledger; here we say
        // they are.
        gw.te_update(&d, true, &mut ledger)?;
    }
    let c = ledger.counter(NodeId(6), NodeId(5));
    println!("patient -> PI interactions: {} satisfactory, {} unsatisfactory", c.sat, c.unsat);
    let records = gw.take_ledger_records();
    println!("policies generated: {}, ledger records queued: {}", gw.generations, records.len());
    Ok(())
}
