use serde::{Deserialize, Serialize};

use super::config::FaultSpec;
use crate::consensus::{Envelope, MessageKind};
use crate::ledger::chain::tamper::{forge_variant, mutate_transaction, Mutation};
use crate::ledger::{sha256_parts, Block, Digest};
use crate::trust::NodeId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeBehavior {
    #[default]
    Honest,
    /// Sends nothing and reports nothing.
    CrashSilent,
    /// Prepare, Reply and SyncAck to even-numbered receivers name a
    /// fabricated hash.
    Equivocator,
    /// Blocks it relays get one transaction byte flipped under the original
    /// hash; its own votes name a forged variant of the block.
    Tamperer,
    /// Every send is held back by this many ticks.
    Laggard(u64),
}

impl NodeBehavior {
    /// Equivocators and tamperers. Crashed and slow nodes are faulty but do
    /// not lie.
    pub fn is_byzantine(self) -> bool {
        matches!(self, NodeBehavior::Equivocator | NodeBehavior::Tamperer)
    }

    /// Nodes whose local state can be taken at face value.
    pub fn is_honest(self) -> bool {
        matches!(self, NodeBehavior::Honest | NodeBehavior::Laggard(_))
    }

    pub fn is_faulty(self) -> bool {
        self != NodeBehavior::Honest
    }
}

/// Behaviour schedule over round indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan {
    windows: Vec<FaultSpec>,
}

impl FaultPlan {
    pub fn new(windows: Vec<FaultSpec>) -> Self {
        FaultPlan { windows }
    }

    pub fn push(&mut self, spec: FaultSpec) {
        self.windows.push(spec);
    }

    pub fn windows(&self) -> &[FaultSpec] {
        &self.windows
    }

    /// The behaviour of `node` during `round`. When windows overlap the one
    /// scheduled last wins.
    pub fn behavior_at(&self, node: NodeId, round: u64) -> NodeBehavior {
        self.windows
            .iter()
            .rev()
            .find(|w| w.node == node.0 && w.start <= round && round < w.end)
            .map_or(NodeBehavior::Honest, |w| w.behavior)
    }
}

pub fn equivocation_hash(h: &Digest) -> Digest {
    sha256_parts(&[b"equivocate", h.as_bytes()])
}

/// A block whose contents no longer match its (unchanged) header.
pub fn tamper_in_transit(block: &Block) -> Block {
    (0..block.transactions().len())
        .find_map(|i| mutate_transaction(block, i, Mutation::PayloadByte { index: 0, xor: 0x01 }).ok())
        .or_else(|| mutate_transaction(block, 0, Mutation::Timestamp { xor: 1 }).ok())
        .unwrap_or_else(|| block.clone())
}

/// Applies the sender's behaviour to one outgoing envelope. Returns the
/// envelope as sent and the extra delay, or `None` when nothing is sent.
/// `held` is the block the sender currently holds.
pub fn apply_behavior(behavior: NodeBehavior, mut env: Envelope, held: Option<&Block>) -> Option<(Envelope, u64)> {
    match behavior {
        NodeBehavior::Honest => Some((env, 0)),
        NodeBehavior::CrashSilent => None,
        NodeBehavior::Laggard(d) => Some((env, d)),
        NodeBehavior::Equivocator => {
            let votes = matches!(env.msg.kind, MessageKind::Prepare | MessageKind::Reply | MessageKind::SyncAck);
            if votes && env.to.label().0.is_multiple_of(2) {
                let fake = equivocation_hash(&env.msg.block_hash);
                env.msg.rehash(fake);
            }
            Some((env, 0))
        }
        NodeBehavior::Tamperer => {
            if env.msg.kind.carries_block() {
                env.msg.block = env.msg.block.as_ref().map(tamper_in_transit);
            } else if let Some(block) = held {
                if env.msg.block_hash == block.hash() {
                    let forged = forge_variant(block).hash();
                    env.msg.rehash(forged);
                }
            }
            Some((env, 0))
        }
    }
}
