use std::collections::{BTreeMap, BTreeSet};

use super::message::{ConsensusMessage, Dest, Envelope, MessageKind};
use super::round::{
    check_prepared_quorum, client_finalize, emit_pre_prepare, group_stage_propose, group_stage_verify, on_pre_prepare,
    prepare_broadcast, ConsensusError, Finality, RejectReason, RoundState, Stage, Verdict,
};
use crate::groups::{ConsensusGroup, PrimaryGroup};
use crate::ledger::{Block, Digest, Transaction};
use crate::trust::{NodeId, TxOutcome};

/// A trust observation: `from` judged its interaction with `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub from: NodeId,
    pub to: NodeId,
    pub outcome: TxOutcome,
}

/// One consensus-group member's view of a single round attempt.
#[derive(Debug, Clone)]
pub struct Replica {
    pub id: NodeId,
    pub state: RoundState,
    cg: ConsensusGroup,
    pg: PrimaryGroup,
    tip: Block,
    client: Dest,
    pg_approvals: BTreeSet<NodeId>,
    proposer: bool,
    pre_prepare_sent: bool,
    commit_votes: BTreeMap<Digest, BTreeSet<NodeId>>,
    /// First prepare per sender, with its arrival tick.
    prepare_arrivals: BTreeMap<NodeId, (Digest, u64)>,
    /// Prepares that arrived before we held a block. Replayed one at a time
    /// once we do, so the quorum is observed at its exact size.
    early_prepares: Vec<ConsensusMessage>,
    /// Vote count at the moment the prepare quorum was reached.
    pub prepared_at: Option<usize>,
    pub committed: Option<Digest>,
    pub observations: Vec<Observation>,
    pub rejections: Vec<(NodeId, RejectReason)>,
}

impl Replica {
    pub fn new(id: NodeId, cg: &ConsensusGroup, pg: &PrimaryGroup, tip: &Block, client: Dest) -> Self {
        Replica {
            id,
            state: RoundState::new(tip.height() + 1, cg.f),
            cg: cg.clone(),
            pg: pg.clone(),
            tip: tip.clone(),
            client,
            pg_approvals: BTreeSet::new(),
            proposer: false,
            pre_prepare_sent: false,
            commit_votes: BTreeMap::new(),
            prepare_arrivals: BTreeMap::new(),
            early_prepares: Vec::new(),
            prepared_at: None,
            committed: None,
            observations: Vec::new(),
            rejections: Vec::new(),
        }
    }

    pub fn block(&self) -> Option<&Block> {
        self.state.pre_generated_block.as_ref()
    }

    fn observe(&mut self, to: NodeId, outcome: TxOutcome) {
        if to != self.id {
            self.observations.push(Observation { from: self.id, to, outcome });
        }
    }

    /// Proposer entry point: group stage, own prepare, and the pre-prepare
    /// right away when the primary group is just us.
    pub fn propose(&mut self, txs: Vec<Transaction>, time: u64) -> Result<Vec<Envelope>, ConsensusError> {
        let (block, mut out) = group_stage_propose(self.id, &self.pg, txs, &self.tip, time)?;
        self.proposer = true;
        self.state.advance(Stage::Grouped);
        self.accept_block(block, &mut out);
        if self.pg.len() == 1 {
            out.extend(self.send_pre_prepare()?);
        }
        self.check_quorums(&mut out);
        Ok(out)
    }

    /// Stage timer on the proposer: go ahead with the approvals we have.
    pub fn on_stage_timeout(&mut self) -> Vec<Envelope> {
        let mut out = Vec::new();
        if self.proposer && !self.pre_prepare_sent {
            if let Ok(pp) = self.send_pre_prepare() {
                out.extend(pp);
            }
        }
        out
    }

    fn send_pre_prepare(&mut self) -> Result<Vec<Envelope>, ConsensusError> {
        let block = self.block().cloned().ok_or(ConsensusError::EmptyProposal)?;
        let out = emit_pre_prepare(self.id, &self.pg, &self.cg, &block, true)?;
        self.pre_prepare_sent = true;
        self.state.advance(Stage::PrePrepared);
        Ok(out)
    }

    fn accept_block(&mut self, block: Block, out: &mut Vec<Envelope>) {
        out.extend(prepare_broadcast(self.id, &self.cg, &block));
        self.state.prepare_votes.entry(block.hash()).or_default().insert(self.id);
        self.state.pre_generated_block = Some(block);
    }

    fn replay_early_prepares(&mut self, out: &mut Vec<Envelope>) {
        for msg in std::mem::take(&mut self.early_prepares) {
            self.count_prepare(&msg, out);
            self.check_quorums(out);
        }
    }

    fn count_prepare(&mut self, msg: &ConsensusMessage, out: &mut Vec<Envelope>) {
        self.state.prepare_votes.entry(msg.block_hash).or_default().insert(msg.sender);
        if self.pg.contains(msg.sender) && self.state.block_hash() == Some(msg.block_hash) {
            self.pg_approvals.insert(msg.sender);
        }
        let others = self.pg.members.iter().filter(|m| **m != self.id).count();
        if self.proposer && !self.pre_prepare_sent && self.pg_approvals.len() >= others {
            if let Ok(pp) = self.send_pre_prepare() {
                out.extend(pp);
            }
        }
    }

    pub fn handle(&mut self, msg: &ConsensusMessage, now: u64) -> Vec<Envelope> {
        let mut out = Vec::new();
        if msg.height != self.state.height || !self.cg.contains(msg.sender) || msg.sender == self.id {
            return out;
        }
        match msg.kind {
            MessageKind::GroupPropose => {
                if self.block().is_some() || !self.pg.contains(self.id) || !self.pg.contains(msg.sender) {
                    return out;
                }
                match group_stage_verify(&self.tip, msg) {
                    Verdict::Approve(block) => {
                        self.observe(msg.sender, TxOutcome::Satisfactory);
                        self.state.advance(Stage::Grouped);
                        self.accept_block(block, &mut out);
                        self.replay_early_prepares(&mut out);
                    }
                    Verdict::Reject(reason) => {
                        self.observe(msg.sender, TxOutcome::Unsatisfactory);
                        self.rejections.push((msg.sender, reason));
                    }
                }
            }
            MessageKind::PrePrepare => {
                if self.block().is_some() || self.pg.contains(self.id) {
                    return out;
                }
                match on_pre_prepare(self.id, &self.cg, &self.pg, &self.tip, msg) {
                    Ok((block, prepares)) => {
                        self.observe(msg.sender, TxOutcome::Satisfactory);
                        self.state.advance(Stage::PrePrepared);
                        self.state.prepare_votes.entry(block.hash()).or_default().insert(self.id);
                        self.state.pre_generated_block = Some(block);
                        out.extend(prepares);
                        self.replay_early_prepares(&mut out);
                    }
                    Err(reason) => {
                        self.observe(msg.sender, TxOutcome::Unsatisfactory);
                        self.rejections.push((msg.sender, reason));
                    }
                }
            }
            MessageKind::Prepare => {
                if !msg.fingerprint_valid() {
                    return out;
                }
                if self.prepare_arrivals.contains_key(&msg.sender) {
                    return out;
                }
                self.prepare_arrivals.insert(msg.sender, (msg.block_hash, now));
                if self.block().is_none() {
                    self.early_prepares.push(msg.clone());
                    return out;
                }
                self.count_prepare(msg, &mut out);
            }
            MessageKind::Commit => {
                if !msg.fingerprint_valid() {
                    return out;
                }
                self.commit_votes.entry(msg.block_hash).or_default().insert(msg.sender);
            }
            _ => return out,
        }
        self.check_quorums(&mut out);
        out
    }

    fn check_quorums(&mut self, out: &mut Vec<Envelope>) {
        let Some(h) = self.state.block_hash() else { return };
        if self.prepared_at.is_none() && check_prepared_quorum(&self.state, &h) {
            self.prepared_at = Some(self.state.prepare_votes[&h].len());
            self.state.advance(Stage::Prepared);
            let height = self.state.height;
            out.push(Envelope { to: self.client, msg: ConsensusMessage::new(MessageKind::Reply, height, h, self.id) });
            let commit = ConsensusMessage::new(MessageKind::Commit, height, h, self.id);
            out.extend(
                self.cg
                    .members
                    .iter()
                    .filter(|&&m| m != self.id)
                    .map(|&m| Envelope { to: Dest::Node(m), msg: commit.clone() }),
            );
            self.commit_votes.entry(h).or_default().insert(self.id);
        }
        if self.committed.is_none() && self.commit_votes.get(&h).map_or(0, BTreeSet::len) > 2 * self.cg.f {
            self.committed = Some(h);
            self.state.advance(Stage::Committed);
        }
    }

    /// Applies the client's finalization to a node that holds the block.
    pub fn on_finalized(&mut self, h: Digest) -> bool {
        if self.committed.is_none() && self.state.block_hash() == Some(h) {
            self.committed = Some(h);
            self.state.advance(Stage::Committed);
        }
        self.committed == Some(h)
    }

    /// End-of-round judgement of every other member's prepare against our
    /// own block: matching and before `deadline` is satisfactory, anything
    /// else (wrong hash, late, missing) is not.
    pub fn prepare_observations(&self, deadline: u64) -> Vec<Observation> {
        let Some(own) = self.state.block_hash() else { return Vec::new() };
        self.cg
            .members
            .iter()
            .filter(|&&m| m != self.id)
            .map(|&m| {
                let ok = matches!(self.prepare_arrivals.get(&m), Some(&(h, t)) if h == own && t <= deadline);
                Observation {
                    from: self.id,
                    to: m,
                    outcome: if ok { TxOutcome::Satisfactory } else { TxOutcome::Unsatisfactory },
                }
            })
            .collect()
    }
}

/// The harness-side client collecting replies for one round attempt.
#[derive(Debug, Clone)]
pub struct Client {
    pub label: NodeId,
    members: BTreeSet<NodeId>,
    f: usize,
    pub replies: BTreeMap<Digest, BTreeSet<NodeId>>,
    pub finality: Finality,
}

impl Client {
    pub fn new(label: NodeId, cg: &ConsensusGroup) -> Self {
        Client {
            label,
            members: cg.members.iter().copied().collect(),
            f: cg.f,
            replies: BTreeMap::new(),
            finality: Finality::Pending,
        }
    }

    /// Records a reply and returns the finality state. The first hash to
    /// reach `f + 1` stays final; a second one turns it into a conflict.
    pub fn on_reply(&mut self, msg: &ConsensusMessage) -> Finality {
        if msg.kind != MessageKind::Reply || !self.members.contains(&msg.sender) || !msg.fingerprint_valid() {
            return self.finality;
        }
        self.replies.entry(msg.block_hash).or_default().insert(msg.sender);
        self.finality = match (self.finality, client_finalize(&self.replies, self.f)) {
            (Finality::Pending, next) => next,
            (Finality::Finalized(first), Finality::ConflictingFinal(a, b)) => {
                Finality::ConflictingFinal(first, if a == first { b } else { a })
            }
            (current, _) => current,
        };
        self.finality
    }
}
