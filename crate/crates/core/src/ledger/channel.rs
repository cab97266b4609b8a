use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::block::Block;
use super::hash::Digest;
use super::tx::Transaction;
use super::LedgerError;
use crate::trust::NodeId;

/// Evidence that consensus finalized a block. Only hash and height are
/// carried; replication checks that they name the block being replicated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalityCertificate {
    pub block_hash: Digest,
    pub height: u64,
    /// Distinct matching replies the client saw.
    pub replies: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplicationReport {
    pub appended: Vec<NodeId>,
    pub already_present: Vec<NodeId>,
    /// Nodes whose copy holds a different block at this height.
    pub divergent: Vec<NodeId>,
    /// Nodes whose copy is missing earlier heights.
    pub lagging: Vec<NodeId>,
}

/// One trace result: block height, block timestamp, and the transaction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceHit {
    pub height: u64,
    pub block_timestamp: u64,
    pub tx: Transaction,
}

/// A private replication domain. Only active nodes hold a copy of the chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel {
    pub name: String,
    pub active_nodes: BTreeSet<NodeId>,
    pub client_node: NodeId,
    copies: BTreeMap<NodeId, Vec<Block>>,
}

impl Channel {
    /// Creates the channel with `genesis` on every active node.
    pub fn new(
        name: impl Into<String>,
        active_nodes: impl IntoIterator<Item = NodeId>,
        client_node: NodeId,
        genesis: Block,
    ) -> Result<Self, LedgerError> {
        let active_nodes: BTreeSet<NodeId> = active_nodes.into_iter().collect();
        if genesis.height() != 0 {
            return Err(LedgerError::NotGenesis);
        }
        let copies = active_nodes.iter().map(|&n| (n, vec![genesis.clone()])).collect();
        Ok(Channel {
            name: name.into(),
            active_nodes,
            client_node,
            copies,
        })
    }

    pub fn is_active(&self, node: NodeId) -> bool {
        self.active_nodes.contains(&node)
    }

    /// The chain copy held by `node`, or `None` for inactive nodes.
    pub fn copy_of(&self, node: NodeId) -> Option<&[Block]> {
        self.copies.get(&node).map(Vec::as_slice)
    }

    pub fn copies(&self) -> impl Iterator<Item = (NodeId, &[Block])> {
        self.copies.iter().map(|(&n, c)| (n, c.as_slice()))
    }

    /// The copy of the lowest-numbered active node.
    pub fn canonical(&self) -> &[Block] {
        self.copies.values().next().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn tip(&self) -> &Block {
        self.canonical().last().expect("channel always holds genesis")
    }

    pub fn height(&self) -> u64 {
        self.tip().height()
    }

    /// Tip header hash per active node.
    pub fn tips(&self) -> BTreeMap<NodeId, Digest> {
        self.copies
            .iter()
            .filter_map(|(&n, c)| c.last().map(|b| (n, b.hash())))
            .collect()
    }

    pub fn tips_agree(&self) -> bool {
        let tips = self.tips();
        let mut values = tips.values();
        match values.next() {
            Some(first) => values.all(|t| t == first),
            None => true,
        }
    }

    /// Appends a locally committed block to one node's copy. Used when a
    /// consensus member commits before the client-driven replication.
    pub(crate) fn append_local(&mut self, node: NodeId, block: &Block) -> Result<bool, LedgerError> {
        let copy = self.copies.get_mut(&node).ok_or(LedgerError::InactiveNode(node))?;
        Ok(push_if_next(copy, block) == Push::Appended)
    }

    /// Appends a finalized block to every active node's copy. Inactive nodes
    /// are never touched. Replaying a block already present is a no-op.
    pub fn replicate_to_channel(
        &mut self,
        block: &Block,
        cert: &FinalityCertificate,
    ) -> Result<ReplicationReport, LedgerError> {
        if cert.block_hash != block.hash() || cert.height != block.height() {
            return Err(LedgerError::NotFinalized);
        }
        let mut report = ReplicationReport::default();
        for (&node, copy) in self.copies.iter_mut() {
            match push_if_next(copy, block) {
                Push::Appended => report.appended.push(node),
                Push::Present => report.already_present.push(node),
                Push::Divergent => report.divergent.push(node),
                Push::Gap => report.lagging.push(node),
            }
        }
        Ok(report)
    }

    /// All transactions matching `predicate`, in chain order.
    pub fn trace(&self, predicate: impl Fn(&Transaction) -> bool) -> Vec<TraceHit> {
        trace(self.canonical(), predicate)
    }

    /// Bytes of channel data held by `node`. Zero for inactive nodes.
    pub fn bytes_held_by(&self, node: NodeId) -> usize {
        self.copies
            .get(&node)
            .map_or(0, |c| c.iter().map(Block::byte_len).sum())
    }
}

#[derive(PartialEq, Eq)]
enum Push {
    Appended,
    Present,
    Divergent,
    Gap,
}

fn push_if_next(copy: &mut Vec<Block>, block: &Block) -> Push {
    let h = block.height() as usize;
    match copy.len().cmp(&h) {
        std::cmp::Ordering::Equal => {
            if copy.last().map(|b| b.hash()) == Some(block.header().previous_hash) {
                copy.push(block.clone());
                Push::Appended
            } else {
                Push::Divergent
            }
        }
        std::cmp::Ordering::Greater if copy[h].hash() == block.hash() => Push::Present,
        std::cmp::Ordering::Greater => Push::Divergent,
        std::cmp::Ordering::Less => Push::Gap,
    }
}

pub fn trace(chain: &[Block], predicate: impl Fn(&Transaction) -> bool) -> Vec<TraceHit> {
    chain
        .iter()
        .flat_map(|b| {
            b.transactions()
                .iter()
                .filter(|tx| predicate(tx))
                .map(move |tx| TraceHit {
                    height: b.height(),
                    block_timestamp: b.header().timestamp,
                    tx: tx.clone(),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::block::{build_block, build_genesis};
    use crate::ledger::tx::{Origin, Payload, Telemetry, TxKind};

    fn tx(id: u64, kind: TxKind, patient: &str, payload: Vec<u8>) -> Transaction {
        Transaction {
            tx_id: id,
            origin: Origin::new("C1", "S1", patient, None),
            kind,
            submitter: "node-1".into(),
            payload: Payload::Inline(payload),
            timestamp: id * 3,
        }
    }

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&x| NodeId(x)).collect()
    }

    fn genesis() -> Block {
        build_genesis(vec![tx(0, TxKind::ProtocolEvent, "-", b"open".to_vec())], 0, 1).unwrap()
    }

    fn cert(b: &Block) -> FinalityCertificate {
        FinalityCertificate { block_hash: b.hash(), height: b.height(), replies: 2 }
    }

    #[test]
    fn only_active_nodes_gain_blocks() {
        let mut ch = Channel::new("patient-enrollment", ids(&[4, 5, 6]), NodeId(6), genesis()).unwrap();
        let b = build_block(ch.tip(), vec![tx(1, TxKind::ProtocolEvent, "p", vec![1])], 5).unwrap();
        let r = ch.replicate_to_channel(&b, &cert(&b)).unwrap();
        assert_eq!(r.appended, ids(&[4, 5, 6]));
        for n in [1, 2, 3, 7, 8, 9] {
            assert!(ch.copy_of(NodeId(n)).is_none());
            assert_eq!(ch.bytes_held_by(NodeId(n)), 0);
        }
        assert!(ch.tips_agree());
    }

    #[test]
    fn sponsor_channel_five_copies() {
        let mut ch = Channel::new("sponsor", ids(&[1, 2, 3, 5, 6]), NodeId(1), genesis()).unwrap();
        let t = Telemetry { temperature_c: 4.0, humidity_rh: 40.0 };
        let b = build_block(ch.tip(), vec![tx(1, TxKind::ShipmentTelemetry, "SH1", t.encode())], 5).unwrap();
        let r = ch.replicate_to_channel(&b, &cert(&b)).unwrap();
        assert_eq!(r.appended.len(), 5);
        assert_eq!(ch.copies().count(), 5);
    }

    #[test]
    fn replay_is_idempotent() {
        let mut ch = Channel::new("c", ids(&[1, 2]), NodeId(1), genesis()).unwrap();
        let b = build_block(ch.tip(), vec![tx(1, TxKind::ProtocolEvent, "p", vec![1])], 5).unwrap();
        ch.replicate_to_channel(&b, &cert(&b)).unwrap();
        let r = ch.replicate_to_channel(&b, &cert(&b)).unwrap();
        assert!(r.appended.is_empty());
        assert_eq!(r.already_present.len(), 2);
        assert_eq!(ch.height(), 1);
    }

    #[test]
    fn certificate_must_match() {
        let mut ch = Channel::new("c", ids(&[1, 2]), NodeId(1), genesis()).unwrap();
        let b = build_block(ch.tip(), vec![tx(1, TxKind::ProtocolEvent, "p", vec![1])], 5).unwrap();
        let mut bad = cert(&b);
        bad.block_hash = Digest::ZERO;
        assert_eq!(ch.replicate_to_channel(&b, &bad), Err(LedgerError::NotFinalized));
    }

    #[test]
    fn conflicting_block_reported_divergent() {
        let mut ch = Channel::new("c", ids(&[1, 2]), NodeId(1), genesis()).unwrap();
        let b1 = build_block(ch.tip(), vec![tx(1, TxKind::ProtocolEvent, "p", vec![1])], 5).unwrap();
        let b2 = build_block(ch.tip(), vec![tx(1, TxKind::ProtocolEvent, "p", vec![2])], 5).unwrap();
        ch.append_local(NodeId(1), &b1).unwrap();
        let r = ch.replicate_to_channel(&b2, &cert(&b2)).unwrap();
        assert_eq!(r.divergent, ids(&[1]));
        assert_eq!(r.appended, ids(&[2]));
        assert!(!ch.tips_agree());
    }

    #[test]
    fn trace_queries() {
        let mut ch = Channel::new("sponsor", ids(&[1, 2]), NodeId(1), genesis()).unwrap();
        let mut id = 1;
        for (h, temps) in [[4.0, 9.5], [3.0, 5.0], [12.0, 2.5]].iter().enumerate() {
            let txs = temps
                .iter()
                .map(|&t| {
                    id += 1;
                    let payload = Telemetry { temperature_c: t, humidity_rh: 45.0 }.encode();
                    tx(id, TxKind::ShipmentTelemetry, "SH1", payload)
                })
                .collect();
            let b = build_block(ch.tip(), txs, 10 * (h as u64 + 1)).unwrap();
            ch.replicate_to_channel(&b, &cert(&b)).unwrap();
        }
        let hot = ch.trace(|t| t.telemetry().is_some_and(|m| m.temperature_c > 8.0));
        let temps: Vec<f64> = hot.iter().map(|h| h.tx.telemetry().unwrap().temperature_c).collect();
        assert_eq!(temps, vec![9.5, 12.0]);
        assert_eq!(hot[0].height, 1);
        assert_eq!(hot[1].block_timestamp, 30);
        assert!(ch.trace(|t| t.origin.patient == "nobody").is_empty());
    }
}
