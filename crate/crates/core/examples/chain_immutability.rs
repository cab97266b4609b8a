//! Flip one byte in a stored transaction and watch verification catch it,
//! then reseal and rechain to see how far a forger would have to go.
//!
//! cargo run --example chain_immutability

use tpbft::ledger::tamper::{mutate_transaction, rechain, reseal, Mutation};
use tpbft::ledger::{build_block, build_genesis, verify_chain, Origin, Payload, Transaction, TxKind};

fn tx(id: u64) -> Transaction {
    Transaction {
        tx_id: id,
        origin: Origin::new("C1", "S1", "C1S1P1", None),
        kind: TxKind::ProtocolEvent,
        submitter: "node-1".into(),
        payload: Payload::Inline(format!("visit {id}").into_bytes()),
        timestamp: id,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut chain = vec![build_genesis(vec![tx(0)], 0, 2)?];
    for h in 1..6u64 {
        let b = build_block(chain.last().unwrap(), vec![tx(2 * h), tx(2 * h + 1)], h * 10)?;
        chain.push(b);
    }
    println!("6 blocks: {:?}", verify_chain(&chain));

    let target = 2;
    let bad = mutate_transaction(&chain[target], 1, Mutation::PayloadByte { index: 0, xor: 0x01 })?;
    println!("stored root   {}", chain[target].header().merkle_root);
    println!("recomputed    {}", bad.recompute_merkle_root()?);

    let mut raw = chain.clone();
    raw[target] = bad.clone();
    println!("byte flipped: {:?}", verify_chain(&raw));

    raw[target] = reseal(&bad)?;
    println!("resealed:     {:?}", verify_chain(&raw));

    let forged = rechain(&raw, target)?;
    println!("rechained:    {:?}", verify_chain(&forged));
    for (a, b) in chain.iter().zip(&forged).skip(target) {
        println!("  height {} {} -> {}", a.height(), &a.hash().to_hex()[..12], &b.hash().to_hex()[..12]);
    }
    Ok(())
}
