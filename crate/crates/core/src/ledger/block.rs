use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::hash::{double_sha256, Digest};
use super::merkle::merkle_root;
use super::tx::Transaction;
use super::LedgerError;

/// Genesis search gives up past this many leading zero hex digits.
pub const MAX_DIFFICULTY: u32 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub previous_hash: Digest,
    /// Simulated ticks; one tick renders as one second.
    pub timestamp: u64,
    pub nonce: u64,
    pub merkle_root: Digest,
    pub header_hash: Digest,
}

impl BlockHeader {
    /// `previous_hash || timestamp (u64 BE) || merkle_root || nonce (u64 BE)`.
    pub fn preimage(previous_hash: &Digest, timestamp: u64, merkle_root: &Digest, nonce: u64) -> [u8; 80] {
        let mut out = [0u8; 80];
        out[..32].copy_from_slice(previous_hash.as_bytes());
        out[32..40].copy_from_slice(&timestamp.to_be_bytes());
        out[40..72].copy_from_slice(merkle_root.as_bytes());
        out[72..].copy_from_slice(&nonce.to_be_bytes());
        out
    }

    pub fn compute_hash(previous_hash: &Digest, timestamp: u64, merkle_root: &Digest, nonce: u64) -> Digest {
        double_sha256(&Self::preimage(previous_hash, timestamp, merkle_root, nonce))
    }

    pub fn recompute_hash(&self) -> Digest {
        Self::compute_hash(&self.previous_hash, self.timestamp, &self.merkle_root, self.nonce)
    }

    pub fn timestamp_display(&self) -> String {
        format_timestamp(self.timestamp)
    }
}

/// Renders simulated ticks as `DDMMYYYY, HH:MM:SS GMT`, counting from
/// 1 January 2024.
pub fn format_timestamp(ticks: u64) -> String {
    let base: DateTime<Utc> = DateTime::from_timestamp(1_704_067_200, 0).expect("valid epoch");
    let secs = i64::try_from(ticks).unwrap_or(i64::MAX / 2);
    let at = base + Duration::seconds(secs.min(10_000_000_000));
    at.format("%d%m%Y, %H:%M:%S GMT").to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub(crate) height: u64,
    pub(crate) header: BlockHeader,
    pub(crate) transactions: Vec<Transaction>,
}

fn leaf_root(txs: &[Transaction]) -> Result<Digest, LedgerError> {
    let leaves: Vec<Digest> = txs.iter().map(Transaction::leaf_digest).collect();
    merkle_root(&leaves)
}

impl Block {
    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn header(&self) -> &BlockHeader {
        &self.header
    }

    pub fn hash(&self) -> Digest {
        self.header.header_hash
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn recompute_merkle_root(&self) -> Result<Digest, LedgerError> {
        leaf_root(&self.transactions)
    }

    /// Approximate on-chain size, used for storage accounting.
    pub fn byte_len(&self) -> usize {
        80 + self.transactions.iter().map(|t| t.canonical_bytes().len()).sum::<usize>()
    }
}

fn check_txs(txs: &[Transaction]) -> Result<(), LedgerError> {
    if txs.is_empty() {
        return Err(LedgerError::EmptyBlock);
    }
    txs.iter().try_for_each(Transaction::validate)
}

/// Builds the next block on top of `prev`. Transactions keep the given
/// order; the nonce is zero.
pub fn build_block(prev: &Block, txs: Vec<Transaction>, time: u64) -> Result<Block, LedgerError> {
    check_txs(&txs)?;
    let root = leaf_root(&txs)?;
    let previous_hash = prev.hash();
    let header_hash = BlockHeader::compute_hash(&previous_hash, time, &root, 0);
    Ok(Block {
        height: prev.height + 1,
        header: BlockHeader {
            previous_hash,
            timestamp: time,
            nonce: 0,
            merkle_root: root,
            header_hash,
        },
        transactions: txs,
    })
}

/// Builds a genesis block, searching nonces from zero until the header hash
/// has at least `difficulty` leading zero hex digits.
pub fn build_genesis(txs: Vec<Transaction>, time: u64, difficulty: u32) -> Result<Block, LedgerError> {
    check_txs(&txs)?;
    if difficulty > MAX_DIFFICULTY {
        return Err(LedgerError::DifficultyTooHigh(difficulty));
    }
    let root = leaf_root(&txs)?;
    let previous_hash = Digest::ZERO;
    let mut nonce = 0u64;
    loop {
        let hash = BlockHeader::compute_hash(&previous_hash, time, &root, nonce);
        if hash.leading_zero_nibbles() >= difficulty {
            return Ok(Block {
                height: 0,
                header: BlockHeader {
                    previous_hash,
                    timestamp: time,
                    nonce,
                    merkle_root: root,
                    header_hash: hash,
                },
                transactions: txs,
            });
        }
        nonce += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::hash::sha256;
    use crate::ledger::tx::{Origin, Payload, TxKind};

    pub(crate) fn tx(id: u64, payload: &[u8]) -> Transaction {
        Transaction {
            tx_id: id,
            origin: Origin::new("C1", "S1", "C1S1P1", None),
            kind: TxKind::ProtocolEvent,
            submitter: "node-1".into(),
            payload: Payload::Inline(payload.to_vec()),
            timestamp: id,
        }
    }

    #[test]
    fn header_hash_is_double_sha_of_layout() {
        let g = build_genesis(vec![tx(1, b"g")], 0, 0).unwrap();
        let b = build_block(&g, vec![tx(2, b"x"), tx(3, b"y")], 10).unwrap();
        let mut pre = Vec::new();
        pre.extend_from_slice(&g.hash().0);
        pre.extend_from_slice(&10u64.to_be_bytes());
        pre.extend_from_slice(&b.header.merkle_root.0);
        pre.extend_from_slice(&0u64.to_be_bytes());
        assert_eq!(b.hash(), sha256(&sha256(&pre).0));
        assert_eq!(b.height(), 1);
        assert_eq!(b.header.previous_hash, g.hash());
    }

    #[test]
    fn deterministic() {
        let g = build_genesis(vec![tx(1, b"g")], 0, 1).unwrap();
        let a = build_block(&g, vec![tx(2, b"x")], 5).unwrap();
        let b = build_block(&g, vec![tx(2, b"x")], 5).unwrap();
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn payload_flip_changes_root_and_hash() {
        let g = build_genesis(vec![tx(1, b"g")], 0, 0).unwrap();
        let a = build_block(&g, vec![tx(2, b"TX1"), tx(3, b"TX2")], 5).unwrap();
        let b = build_block(&g, vec![tx(2, b"TX11"), tx(3, b"TX2")], 5).unwrap();
        assert_ne!(a.header.merkle_root, b.header.merkle_root);
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn genesis_meets_difficulty() {
        for d in 0..=3 {
            let g = build_genesis(vec![tx(1, b"genesis")], 0, d).unwrap();
            assert!(g.hash().to_hex().starts_with(&"0".repeat(d as usize)));
            assert_eq!(g.header.previous_hash, Digest::ZERO);
        }
        assert!(build_genesis(vec![tx(1, b"g")], 0, 2).unwrap().hash().to_hex().starts_with("00"));
        assert_eq!(
            build_genesis(vec![tx(1, b"g")], 0, 7),
            Err(LedgerError::DifficultyTooHigh(7))
        );
    }

    #[test]
    fn empty_block_rejected() {
        let g = build_genesis(vec![tx(1, b"g")], 0, 0).unwrap();
        assert_eq!(build_block(&g, vec![], 1), Err(LedgerError::EmptyBlock));
        assert_eq!(build_genesis(vec![], 1, 0), Err(LedgerError::EmptyBlock));
    }

    #[test]
    fn timestamp_rendering() {
        assert_eq!(format_timestamp(0), "01012024, 00:00:00 GMT");
        assert_eq!(format_timestamp(86_400 + 3_661), "02012024, 01:01:01 GMT");
    }
}
