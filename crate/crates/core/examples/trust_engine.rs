//! Direct, recommended and global trust for a small network.
//!
//! cargo run --example trust_engine

use tpbft::trust::{recompute, LocalTrustMatrix, NodeId, Provenance, TrustLedger, TxOutcome};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = NodeId;
    let mut ledger = TrustLedger::new((1..=5).map(NodeId));
    // (from, to, satisfactory, unsatisfactory)
    let history = [(1, 2, 3, 1), (1, 3, 1, 2), (2, 4, 4, 0), (3, 4, 1, 0), (4, 1, 2, 0), (5, 1, 0, 3)];
    for (i, j, sat, unsat) in history {
        for _ in 0..sat {
            ledger.record_transaction(n(i), n(j), TxOutcome::Satisfactory)?;
        }
        for _ in 0..unsat {
            ledger.record_transaction(n(i), n(j), TxOutcome::Unsatisfactory)?;
        }
    }

    for i in 1..=5 {
        let d = ledger.direct_trust(n(i))?;
        let row: Vec<String> = d.values.iter().map(|(j, v)| format!("{j}={v:.3}")).collect();
        println!("direct {}: [{}]{}", n(i), row.join(", "), if d.fallback { " (uniform fallback)" } else { "" });
    }

    let m = LocalTrustMatrix::from_ledger(&ledger);
    println!("\nrecommended entries:");
    for (&(i, j), e) in m.entries() {
        if e.provenance == Provenance::Recommended {
            println!("  {i} -> {j}: {:.4}", e.value);
        }
    }

    let t = recompute(&ledger, None)?;
    println!("\nglobal trust after {} sweeps (converged: {}):", t.iteration_count, t.converged);
    for (id, v) in &t.values {
        println!("  {id}: {v:.4}");
    }
    println!("  sum = {:.12}", t.sum());
    Ok(())
}
