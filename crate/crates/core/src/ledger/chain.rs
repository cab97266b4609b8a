use serde::{Deserialize, Serialize};

use super::block::{Block, BlockHeader};
use super::hash::Digest;
use super::LedgerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BreakReason {
    MerkleMismatch,
    HeaderMismatch,
    LinkMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainStatus {
    Valid,
    BrokenAt { index: usize, reason: BreakReason },
}

impl ChainStatus {
    pub fn is_valid(&self) -> bool {
        matches!(self, ChainStatus::Valid)
    }
}

/// Walks the chain from genesis, recomputing each Merkle root and header
/// hash and checking the previous-hash links. Reports the first failure.
pub fn verify_chain(chain: &[Block]) -> ChainStatus {
    for (index, block) in chain.iter().enumerate() {
        let broken = |reason| ChainStatus::BrokenAt { index, reason };
        match block.recompute_merkle_root() {
            Ok(root) if root == block.header.merkle_root => {}
            _ => return broken(BreakReason::MerkleMismatch),
        }
        if block.header.recompute_hash() != block.header.header_hash {
            return broken(BreakReason::HeaderMismatch);
        }
        let expected_prev = match index {
            0 => Digest::ZERO,
            _ => chain[index - 1].header.header_hash,
        };
        if block.header.previous_hash != expected_prev || block.height != index as u64 {
            return broken(BreakReason::LinkMismatch);
        }
    }
    ChainStatus::Valid
}

/// Fault-injection API. These are the only routes that alter an existing
/// block, and they always return a modified copy.
pub mod tamper {
    use super::*;

    /// Which field of a transaction to disturb.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Mutation {
        /// XOR one payload byte with the mask.
        PayloadByte { index: usize, xor: u8 },
        TxId { xor: u64 },
        Timestamp { xor: u64 },
    }

    /// Applies `mutation` to transaction `tx_index` of `block` without
    /// touching the header.
    pub fn mutate_transaction(block: &Block, tx_index: usize, mutation: Mutation) -> Result<Block, LedgerError> {
        let mut out = block.clone();
        let tx = out
            .transactions
            .get_mut(tx_index)
            .ok_or(LedgerError::BadIndex { what: "transaction", index: tx_index })?;
        match mutation {
            Mutation::PayloadByte { index, xor } => {
                let bytes = tx.payload.bytes_mut();
                let byte = bytes
                    .get_mut(index)
                    .ok_or(LedgerError::BadIndex { what: "payload byte", index })?;
                *byte ^= xor;
            }
            Mutation::TxId { xor } => tx.tx_id ^= xor,
            Mutation::Timestamp { xor } => tx.timestamp ^= xor,
        }
        Ok(out)
    }

    /// Recomputes the Merkle root and header hash in place of the stored
    /// ones, keeping the previous-hash link as it is.
    pub fn reseal(block: &Block) -> Result<Block, LedgerError> {
        let mut out = block.clone();
        out.header.merkle_root = block.recompute_merkle_root()?;
        out.header.header_hash = out.header.recompute_hash();
        Ok(out)
    }

    /// Re-forges every block from `from` onward so that links line up
    /// again. Each re-forged block gets a new header hash.
    pub fn rechain(chain: &[Block], from: usize) -> Result<Vec<Block>, LedgerError> {
        let mut out = chain.to_vec();
        for i in from..out.len() {
            let mut block = reseal(&out[i])?;
            if i > 0 {
                block.header.previous_hash = out[i - 1].header.header_hash;
                block.header.header_hash = BlockHeader::compute_hash(
                    &block.header.previous_hash,
                    block.header.timestamp,
                    &block.header.merkle_root,
                    block.header.nonce,
                );
            }
            out[i] = block;
        }
        Ok(out)
    }

    /// A copy of `block` whose first transaction has its first payload byte
    /// flipped and whose header has been resealed. Used by the Tamperer
    /// behaviour to produce a plausible-looking forged block.
    pub fn forge_variant(block: &Block) -> Block {
        let mutated = (0..block.transactions.len())
            .find_map(|i| mutate_transaction(block, i, Mutation::PayloadByte { index: 0, xor: 0x01 }).ok())
            .or_else(|| mutate_transaction(block, 0, Mutation::Timestamp { xor: 1 }).ok())
            .unwrap_or_else(|| block.clone());
        reseal(&mutated).unwrap_or(mutated)
    }
}
