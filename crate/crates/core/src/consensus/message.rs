use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ledger::{sha256_parts, Block, Digest};
use crate::trust::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    GroupPropose,
    PrePrepare,
    Prepare,
    Commit,
    Reply,
    /// Flat-PBFT baseline only.
    ViewChange,
    /// Flat-PBFT baseline only.
    NewView,
    /// A replica outside the consensus group confirming the block it was
    /// handed after finality.
    SyncAck,
}

impl MessageKind {
    pub const ALL: [MessageKind; 8] = [
        MessageKind::GroupPropose,
        MessageKind::PrePrepare,
        MessageKind::Prepare,
        MessageKind::Commit,
        MessageKind::Reply,
        MessageKind::ViewChange,
        MessageKind::NewView,
        MessageKind::SyncAck,
    ];

    pub fn tag(self) -> u8 {
        self as u8 + 1
    }

    pub fn carries_block(self) -> bool {
        matches!(self, MessageKind::GroupPropose | MessageKind::PrePrepare)
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Where a message goes. The client is the harness endpoint that collects
/// replies; it is labelled with the channel's client node id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dest {
    Node(NodeId),
    Client(NodeId),
}

impl Dest {
    /// The node id used for parity-based equivocation.
    pub fn label(self) -> NodeId {
        match self {
            Dest::Node(id) | Dest::Client(id) => id,
        }
    }
}

impl fmt::Display for Dest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dest::Node(id) => write!(f, "{id}"),
            Dest::Client(id) => write!(f, "client({})", id.0),
        }
    }
}

/// Per-node salt standing in for a signing key. Every simulated node can
/// recompute it, which is enough to detect forged sender fields.
pub fn node_salt(id: NodeId) -> Digest {
    sha256_parts(&[b"tpbft-node-salt", &id.0.to_be_bytes()])
}

pub fn sender_fingerprint(kind: MessageKind, height: u64, block_hash: &Digest, sender: NodeId) -> Digest {
    let salt = node_salt(sender);
    sha256_parts(&[
        &[kind.tag()],
        &height.to_be_bytes(),
        block_hash.as_bytes(),
        &sender.0.to_be_bytes(),
        salt.as_bytes(),
    ])
}

/// SHA-256 over the sorted primary-group ids and the block hash. The
/// proposer id is not part of the preimage.
pub fn group_fingerprint(primary_group: &[NodeId], block_hash: &Digest) -> Digest {
    let mut ids: Vec<NodeId> = primary_group.to_vec();
    ids.sort();
    let mut bytes = Vec::with_capacity(ids.len() * 4 + 32);
    for id in ids {
        bytes.extend_from_slice(&id.0.to_be_bytes());
    }
    bytes.extend_from_slice(block_hash.as_bytes());
    sha256_parts(&[&bytes])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusMessage {
    pub kind: MessageKind,
    pub height: u64,
    pub block_hash: Digest,
    pub sender: NodeId,
    pub sender_fingerprint: Digest,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_fingerprint: Option<Digest>,
    #[serde(skip)]
    pub block: Option<Block>,
}

impl ConsensusMessage {
    pub fn new(kind: MessageKind, height: u64, block_hash: Digest, sender: NodeId) -> Self {
        ConsensusMessage {
            kind,
            height,
            block_hash,
            sender,
            sender_fingerprint: sender_fingerprint(kind, height, &block_hash, sender),
            group_fingerprint: None,
            block: None,
        }
    }

    pub fn with_block(mut self, block: Block) -> Self {
        self.block = Some(block);
        self
    }

    pub fn with_group_fingerprint(mut self, fp: Digest) -> Self {
        self.group_fingerprint = Some(fp);
        self
    }

    pub fn fingerprint_valid(&self) -> bool {
        self.sender_fingerprint == sender_fingerprint(self.kind, self.height, &self.block_hash, self.sender)
    }

    /// Replaces the hash and re-signs, as a faulty sender would.
    pub(crate) fn rehash(&mut self, block_hash: Digest) {
        self.block_hash = block_hash;
        self.sender_fingerprint = sender_fingerprint(self.kind, self.height, &block_hash, self.sender);
    }
}

/// A message on its way to one receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub to: Dest,
    pub msg: ConsensusMessage,
}

/// One line of the exported message trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub kind: MessageKind,
    pub height: u64,
    pub sender: NodeId,
    pub receiver: Dest,
    pub sim_time: u64,
    pub block_hash: Digest,
    pub channel: String,
    pub delivered: bool,
}
