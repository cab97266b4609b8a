//! Blocks, Merkle roots, hash-linked chains and channel replication.

pub mod block;
pub mod chain;
pub mod channel;
pub mod export;
pub mod hash;
pub mod merkle;
pub mod rollup;
pub mod tx;

use thiserror::Error;

use crate::trust::NodeId;

pub use block::{build_block, build_genesis, format_timestamp, Block, BlockHeader, MAX_DIFFICULTY};
pub use chain::{tamper, verify_chain, BreakReason, ChainStatus};
pub use channel::{Channel, FinalityCertificate, ReplicationReport, TraceHit};
pub use export::{read_chain_jsonl, write_chain_jsonl, ExportError};
pub use hash::{double_sha256, sha256, sha256_hex, sha256_parts, Digest};
pub use merkle::{merkle_root, MerkleTree};
pub use rollup::{rollup, sponsor_signature, RollupLevel, RollupSignature};
pub use tx::{Origin, Payload, Telemetry, Transaction, TxKind, Zone};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("no leaves to hash")]
    EmptyLeaves,
    #[error("a block needs at least one transaction")]
    EmptyBlock,
    #[error("transaction {0} is wearable-sourced but has no zone")]
    MissingZone(u64),
    #[error("difficulty {0} exceeds the maximum of {MAX_DIFFICULTY}")]
    DifficultyTooHigh(u32),
    #[error("{what} index {index} out of range")]
    BadIndex { what: &'static str, index: usize },
    #[error("block is not covered by a matching finality certificate")]
    NotFinalized,
    #[error("a channel must start from a height-0 block")]
    NotGenesis,
    #[error("{0} is not active on this channel")]
    InactiveNode(NodeId),
    #[error("roll-up children must share one level below sponsor")]
    MixedRollupLevels,
}
