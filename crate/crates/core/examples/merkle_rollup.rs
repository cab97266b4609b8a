//! Patient data digests rolled up through PI, country and CRO into one
//! sponsor signature. Changing one reading changes every level above it.
//!
//! cargo run --example merkle_rollup

use tpbft::ledger::{rollup, sha256, sponsor_signature, Digest, MerkleTree, RollupSignature};

fn readings(patient: &str, n: usize) -> Vec<Digest> {
    (0..n).map(|k| sha256(format!("{patient}/reading-{k}").as_bytes())).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // One CRO, two countries, two sites each, two patients per site.
    let mut hierarchy = vec![vec![]];
    for c in 1..=2 {
        let sites = (1..=2)
            .map(|s| (1..=2).map(|p| readings(&format!("C{c}S{s}P{p}"), 3)).collect())
            .collect();
        hierarchy[0].push(sites);
    }
    let sponsor = sponsor_signature(&hierarchy)?;
    println!("sponsor signature {}", sponsor.digest);

    let tree = MerkleTree::build(readings("C1S1P1", 3))?;
    for (k, level) in tree.levels().iter().enumerate() {
        let row: Vec<String> = level.iter().map(|d| d.to_hex()[..8].to_string()).collect();
        println!("  C1S1P1 level {k}: {}", row.join(" "));
    }

    hierarchy[0][1][0][1][2] = sha256(b"C2S1P2/reading-2 (edited)");
    let edited = sponsor_signature(&hierarchy)?;
    println!("after editing one reading of C2S1P2: {}", edited.digest);
    assert_ne!(edited.digest, sponsor.digest);

    let pis: Vec<RollupSignature> = hierarchy[0][0]
        .iter()
        .map(|patients| {
            let sigs: Vec<RollupSignature> = patients.iter().map(|d| RollupSignature::patient(d)).collect::<Result<_, _>>()?;
            rollup(&sigs)
        })
        .collect::<Result<_, _>>()?;
    let country = rollup(&pis)?;
    println!("country C1 ({:?}) from {} PI signatures: {}", country.level, pis.len(), country.digest);
    Ok(())
}
