use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::message::{group_fingerprint, ConsensusMessage, Dest, Envelope, MessageKind};
use crate::groups::{ConsensusGroup, PrimaryGroup};
use crate::ledger::{build_block, Block, Digest, LedgerError, Transaction};
use crate::trust::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("{0} is not in the primary group")]
    NotPrimaryMember(NodeId),
    #[error("no pending transactions to propose")]
    EmptyProposal,
    #[error("group stage still waiting on primary-group approvals")]
    GroupStageIncomplete,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    HashMismatch,
    StaleParent,
    SimulationMismatch,
    BadFingerprint,
    NotFromPrimaryGroup,
    MissingBlock,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Approve(Block),
    Reject(RejectReason),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    #[default]
    Idle,
    Grouped,
    PrePrepared,
    Prepared,
    Committed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundState {
    pub height: u64,
    pub stage: Stage,
    pub pre_generated_block: Option<Block>,
    pub prepare_votes: BTreeMap<Digest, BTreeSet<NodeId>>,
    pub replies_seen: BTreeMap<Digest, BTreeSet<NodeId>>,
    pub f: usize,
}

impl RoundState {
    pub fn new(height: u64, f: usize) -> Self {
        RoundState { height, f, ..Default::default() }
    }

    /// Moves forward to `to`; never moves back.
    pub fn advance(&mut self, to: Stage) {
        if to > self.stage {
            self.stage = to;
        }
    }

    pub fn block_hash(&self) -> Option<Digest> {
        self.pre_generated_block.as_ref().map(Block::hash)
    }
}

/// Orders by transaction id so every honest node rebuilds the same block.
pub fn order_transactions(mut txs: Vec<Transaction>) -> Vec<Transaction> {
    txs.sort_by_key(|t| t.tx_id);
    txs
}

/// Builds the pre-generated block and one GroupPropose per other primary
/// group member.
pub fn group_stage_propose(
    proposer: NodeId,
    pg: &PrimaryGroup,
    pending_txs: Vec<Transaction>,
    tip: &Block,
    time: u64,
) -> Result<(Block, Vec<Envelope>), ConsensusError> {
    if !pg.contains(proposer) {
        return Err(ConsensusError::NotPrimaryMember(proposer));
    }
    if pending_txs.is_empty() {
        return Err(ConsensusError::EmptyProposal);
    }
    let block = build_block(tip, order_transactions(pending_txs), time)?;
    let msg = ConsensusMessage::new(MessageKind::GroupPropose, block.height(), block.hash(), proposer)
        .with_block(block.clone());
    let out = pg
        .members
        .iter()
        .filter(|&&m| m != proposer)
        .map(|&m| Envelope { to: Dest::Node(m), msg: msg.clone() })
        .collect();
    Ok((block, out))
}

/// Rebuilds the block from the carried transactions on top of our own tip
/// and compares header hashes.
fn recompute(tip: &Block, msg: &ConsensusMessage, mismatch: RejectReason) -> Verdict {
    let Some(block) = msg.block.as_ref() else {
        return Verdict::Reject(RejectReason::MissingBlock);
    };
    if block.header().previous_hash != tip.hash() || msg.height != tip.height() + 1 {
        return Verdict::Reject(RejectReason::StaleParent);
    }
    let txs = order_transactions(block.transactions().to_vec());
    match build_block(tip, txs, block.header().timestamp) {
        Ok(rebuilt) if rebuilt.hash() == msg.block_hash && rebuilt.header() == block.header() => Verdict::Approve(rebuilt),
        _ => Verdict::Reject(mismatch),
    }
}

pub fn group_stage_verify(tip: &Block, msg: &ConsensusMessage) -> Verdict {
    if !msg.fingerprint_valid() {
        return Verdict::Reject(RejectReason::BadFingerprint);
    }
    recompute(tip, msg, RejectReason::HashMismatch)
}

/// One PrePrepare per replica, i.e. consensus-group member outside the
/// primary group.
pub fn emit_pre_prepare(
    sender: NodeId,
    pg: &PrimaryGroup,
    cg: &ConsensusGroup,
    block: &Block,
    group_stage_complete: bool,
) -> Result<Vec<Envelope>, ConsensusError> {
    if !group_stage_complete {
        return Err(ConsensusError::GroupStageIncomplete);
    }
    let fp = group_fingerprint(&pg.members, &block.hash());
    let msg = ConsensusMessage::new(MessageKind::PrePrepare, block.height(), block.hash(), sender)
        .with_group_fingerprint(fp)
        .with_block(block.clone());
    Ok(cg
        .members
        .iter()
        .filter(|m| !pg.contains(**m))
        .map(|&m| Envelope { to: Dest::Node(m), msg: msg.clone() })
        .collect())
}

/// Replica-side validation of a PrePrepare. On success returns the block
/// and the Prepare broadcasts to the rest of the consensus group.
pub fn on_pre_prepare(
    replica: NodeId,
    cg: &ConsensusGroup,
    pg: &PrimaryGroup,
    tip: &Block,
    msg: &ConsensusMessage,
) -> Result<(Block, Vec<Envelope>), RejectReason> {
    if !pg.contains(msg.sender) {
        return Err(RejectReason::NotFromPrimaryGroup);
    }
    if !msg.fingerprint_valid() || msg.group_fingerprint != Some(group_fingerprint(&pg.members, &msg.block_hash)) {
        return Err(RejectReason::BadFingerprint);
    }
    let block = match recompute(tip, msg, RejectReason::SimulationMismatch) {
        Verdict::Approve(b) => b,
        Verdict::Reject(r) => return Err(r),
    };
    Ok((block.clone(), prepare_broadcast(replica, cg, &block)))
}

pub(crate) fn prepare_broadcast(from: NodeId, cg: &ConsensusGroup, block: &Block) -> Vec<Envelope> {
    let msg = ConsensusMessage::new(MessageKind::Prepare, block.height(), block.hash(), from);
    cg.members
        .iter()
        .filter(|&&m| m != from)
        .map(|&m| Envelope { to: Dest::Node(m), msg: msg.clone() })
        .collect()
}

/// Strictly more than `2f` matching prepares.
pub fn check_prepared_quorum(state: &RoundState, block_hash: &Digest) -> bool {
    state.prepare_votes.get(block_hash).map_or(0, BTreeSet::len) > 2 * state.f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Finality {
    Pending,
    Finalized(Digest),
    ConflictingFinal(Digest, Digest),
}

/// Looks for hashes with at least `f + 1` distinct repliers.
pub fn client_finalize(replies: &BTreeMap<Digest, BTreeSet<NodeId>>, f: usize) -> Finality {
    let mut reached = replies.iter().filter(|(_, who)| who.len() > f).map(|(h, _)| *h);
    match (reached.next(), reached.next()) {
        (None, _) => Finality::Pending,
        (Some(h), None) => Finality::Finalized(h),
        (Some(a), Some(b)) => Finality::ConflictingFinal(a, b),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Replacement {
    Proposer(NodeId),
    ViewChangeFallback,
}

/// Round-robin proposer for `height`, skipping failed members in group
/// order.
pub fn select_proposer(pg: &PrimaryGroup, height: u64, failed: &BTreeSet<NodeId>) -> Replacement {
    let n = pg.len();
    if n == 0 {
        return Replacement::ViewChangeFallback;
    }
    let start = (height % n as u64) as usize;
    (0..n)
        .map(|k| pg.members[(start + k) % n])
        .find(|m| !failed.contains(m))
        .map_or(Replacement::ViewChangeFallback, Replacement::Proposer)
}

/// Marks `failed` and hands proposer duty to the next live member.
pub fn replace_failed_primary(
    pg: &PrimaryGroup,
    height: u64,
    failed: NodeId,
    already_failed: &mut BTreeSet<NodeId>,
) -> Replacement {
    already_failed.insert(failed);
    select_proposer(pg, height, already_failed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{build_genesis, sha256, Origin, Payload, TxKind};

    fn tx(id: u64) -> Transaction {
        Transaction {
            tx_id: id,
            origin: Origin::new("C1", "S1", "P1", None),
            kind: TxKind::ProtocolEvent,
            submitter: "node-1".into(),
            payload: Payload::Inline(vec![id as u8]),
            timestamp: id,
        }
    }

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&x| NodeId(x)).collect()
    }

    fn genesis() -> Block {
        build_genesis(vec![tx(0)], 0, 1).unwrap()
    }

    fn cg4() -> ConsensusGroup {
        ConsensusGroup { members: ids(&[1, 2, 3, 4]), f: 1 }
    }

    #[test]
    fn propose_singleton_group() {
        let pg = PrimaryGroup { members: ids(&[1]) };
        let (b, out) = group_stage_propose(NodeId(1), &pg, vec![tx(3), tx(1), tx(2)], &genesis(), 5).unwrap();
        assert!(out.is_empty());
        let ids: Vec<u64> = b.transactions().iter().map(|t| t.tx_id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
        let leaves: Vec<Digest> = b.transactions().iter().map(Transaction::leaf_digest).collect();
        assert_eq!(b.header().merkle_root, crate::ledger::merkle_root(&leaves).unwrap());
    }

    #[test]
    fn propose_pair_and_errors() {
        let pg = PrimaryGroup { members: ids(&[1, 2]) };
        let (_, out) = group_stage_propose(NodeId(1), &pg, vec![tx(1)], &genesis(), 5).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].to, Dest::Node(NodeId(2)));
        assert!(out[0].msg.block.is_some());
        assert_eq!(
            group_stage_propose(NodeId(5), &pg, vec![tx(1)], &genesis(), 5).unwrap_err(),
            ConsensusError::NotPrimaryMember(NodeId(5))
        );
        assert_eq!(
            group_stage_propose(NodeId(1), &pg, vec![], &genesis(), 5).unwrap_err(),
            ConsensusError::EmptyProposal
        );
    }

    #[test]
    fn verify_group_proposal() {
        let g = genesis();
        let pg = PrimaryGroup { members: ids(&[1, 2]) };
        let (b, out) = group_stage_propose(NodeId(1), &pg, vec![tx(1), tx(2)], &g, 5).unwrap();
        assert_eq!(group_stage_verify(&g, &out[0].msg), Verdict::Approve(b.clone()));

        let mut bad = out[0].msg.clone();
        let mut blk = b.clone();
        blk.header.merkle_root.0[0] ^= 1;
        bad.block = Some(blk);
        assert_eq!(group_stage_verify(&g, &bad), Verdict::Reject(RejectReason::HashMismatch));

        let next = build_block(&g, vec![tx(9)], 1).unwrap();
        let (_, stale) = group_stage_propose(NodeId(1), &pg, vec![tx(1)], &next, 5).unwrap();
        assert_eq!(group_stage_verify(&g, &stale[0].msg), Verdict::Reject(RejectReason::StaleParent));
    }

    #[test]
    fn pre_prepare_fan_out() {
        let g = genesis();
        let b = build_block(&g, vec![tx(1)], 5).unwrap();
        let pg = PrimaryGroup { members: ids(&[1]) };
        let out = emit_pre_prepare(NodeId(1), &pg, &cg4(), &b, true).unwrap();
        let to: Vec<Dest> = out.iter().map(|e| e.to).collect();
        assert_eq!(to, ids(&[2, 3, 4]).into_iter().map(Dest::Node).collect::<Vec<_>>());
        let full = PrimaryGroup { members: ids(&[1, 2, 3, 4]) };
        assert!(emit_pre_prepare(NodeId(1), &full, &cg4(), &b, true).unwrap().is_empty());
        assert_eq!(
            emit_pre_prepare(NodeId(1), &pg, &cg4(), &b, false).unwrap_err(),
            ConsensusError::GroupStageIncomplete
        );
    }

    #[test]
    fn replica_checks_pre_prepare() {
        let g = genesis();
        let b = build_block(&g, vec![tx(1), tx(2)], 5).unwrap();
        let pg = PrimaryGroup { members: ids(&[1]) };
        let pp = emit_pre_prepare(NodeId(1), &pg, &cg4(), &b, true).unwrap().remove(0).msg;

        // A replica accepts without learning which member built the block.
        let (got, prepares) = on_pre_prepare(NodeId(2), &cg4(), &pg, &g, &pp).unwrap();
        assert_eq!(got, b);
        assert_eq!(prepares.len(), 3);
        assert!(prepares.iter().all(|e| e.msg.kind == MessageKind::Prepare && e.msg.block_hash == b.hash()));

        let mut tampered = pp.clone();
        tampered.block = Some(crate::ledger::tamper::mutate_transaction(
            &b,
            0,
            crate::ledger::tamper::Mutation::PayloadByte { index: 0, xor: 0x80 },
        ).unwrap());
        assert_eq!(
            on_pre_prepare(NodeId(2), &cg4(), &pg, &g, &tampered).unwrap_err(),
            RejectReason::SimulationMismatch
        );

        let mut forged = pp.clone();
        forged.group_fingerprint = Some(sha256(b"forged"));
        assert_eq!(on_pre_prepare(NodeId(2), &cg4(), &pg, &g, &forged).unwrap_err(), RejectReason::BadFingerprint);
    }

    #[test]
    fn prepare_quorum_is_strict() {
        let h = sha256(b"h");
        let mut st = RoundState::new(1, 1);
        st.prepare_votes.insert(h, ids(&[1, 2]).into_iter().collect());
        assert!(!check_prepared_quorum(&st, &h));
        st.prepare_votes.get_mut(&h).unwrap().insert(NodeId(3));
        assert!(check_prepared_quorum(&st, &h));
        let mut zero = RoundState::new(1, 0);
        zero.prepare_votes.insert(h, ids(&[4]).into_iter().collect());
        assert!(check_prepared_quorum(&zero, &h));
    }

    #[test]
    fn client_rules() {
        let h = sha256(b"h");
        let h2 = sha256(b"h2");
        let set = |v: &[u32]| -> BTreeSet<NodeId> { ids(v).into_iter().collect() };
        assert_eq!(client_finalize(&BTreeMap::from([(h, set(&[1, 2]))]), 1), Finality::Finalized(h));
        assert_eq!(client_finalize(&BTreeMap::from([(h, set(&[1]))]), 1), Finality::Pending);
        let both = BTreeMap::from([(h, set(&[1, 2])), (h2, set(&[3, 4]))]);
        assert!(matches!(client_finalize(&both, 1), Finality::ConflictingFinal(..)));
    }

    #[test]
    fn proposer_rotation() {
        let pg = PrimaryGroup { members: ids(&[1, 2]) };
        let mut failed = BTreeSet::new();
        assert_eq!(select_proposer(&pg, 0, &failed), Replacement::Proposer(NodeId(1)));
        assert_eq!(select_proposer(&pg, 1, &failed), Replacement::Proposer(NodeId(2)));
        assert_eq!(replace_failed_primary(&pg, 0, NodeId(1), &mut failed), Replacement::Proposer(NodeId(2)));

        let solo = PrimaryGroup { members: ids(&[1]) };
        assert_eq!(replace_failed_primary(&solo, 0, NodeId(1), &mut BTreeSet::new()), Replacement::ViewChangeFallback);

        let three = PrimaryGroup { members: ids(&[1, 2, 3]) };
        let mut failed = BTreeSet::new();
        replace_failed_primary(&three, 0, NodeId(1), &mut failed);
        assert_eq!(replace_failed_primary(&three, 0, NodeId(2), &mut failed), Replacement::Proposer(NodeId(3)));
    }

    #[test]
    fn stage_never_regresses() {
        let mut st = RoundState::new(1, 1);
        st.advance(Stage::Prepared);
        st.advance(Stage::Grouped);
        assert_eq!(st.stage, Stage::Prepared);
    }
}
