use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use log::{debug, info};
use thiserror::Error;

use super::config::{ChannelRole, ChannelSpec, FaultSpec, ScenarioConfig};
use super::faults::{apply_behavior, FaultPlan, NodeBehavior};
use super::metrics::{GroupSnapshot, Metrics, Mode, RoundRecord, TamperDetection, TrustSnapshot};
use super::network::{sample_link, Event, EventQueue, LinkKey, TIMER_SENDER};
use super::workload::{out_of_band, WorkloadGen};
use crate::consensus::{
    select_proposer, Client, ConsensusMessage, Dest, Envelope, Finality, MessageKind, Observation, RejectReason, Replacement, Replica,
    TraceRecord,
};
use crate::gateway::{decision_hash_in, DeviceRegistration, Gateway, GatewayError, PolicyDecision, Registry};
use crate::groups::{build_consensus_group, build_primary_group, max_faulty, ConsensusGroup, GroupError, PrimaryGroup};
use crate::ledger::{
    build_genesis, Block, Channel, Digest, FinalityCertificate, LedgerError, Origin, Payload, Transaction, TxKind,
};
use crate::trust::{recompute, NodeId, TrustError, TrustLedger, TrustVector, TxOutcome};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("fault window {start}..{end} lies outside the {rounds}-round horizon")]
    WindowOutsideHorizon { start: u64, end: u64, rounds: u64 },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error(transparent)]
    Groups(#[from] GroupError),
}

/// One channel's chain plus the harness state around it.
#[derive(Debug, Clone)]
pub struct ChannelState {
    pub spec: ChannelSpec,
    pub chain: Channel,
    /// Admitted but not yet finalized, in admission order.
    pub pending: Vec<Transaction>,
    pub devices: Vec<DeviceRegistration>,
    /// Flat-PBFT view number.
    view: u64,
}

enum AttemptOutcome {
    Finalized { hash: Digest, at: u64 },
    Conflict(Digest, Digest),
    Aborted,
}

struct Attempt {
    outcome: AttemptOutcome,
    replicas: BTreeMap<NodeId, Replica>,
    client: Client,
    deadline: u64,
    end: u64,
    messages: u64,
}

/// A deterministic run of one scenario.
pub struct Simulation {
    cfg: ScenarioConfig,
    mode: Mode,
    faults: FaultPlan,
    channels: Vec<ChannelState>,
    pub gateway: Gateway,
    trust_ledger: TrustLedger,
    trust: TrustVector,
    epoch: u64,
    workload: WorkloadGen,
    metrics: Metrics,
    trace: Option<Vec<TraceRecord>>,
    now: u64,
    round: u64,
    /// Granted decisions whose ledger record has not finalized yet.
    awaiting: BTreeMap<Digest, PolicyDecision>,
    /// Channel each admitted transaction was routed to.
    admitted: BTreeMap<u64, usize>,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig, mode: Mode) -> Result<Self, SimError> {
        let nodes = cfg.nodes();
        let trust = match &cfg.initial_trust {
            Some(t) => {
                let total: f64 = nodes.iter().map(|n| t.get(&n.0).copied().unwrap_or(0.0)).sum();
                TrustVector::from_values(nodes.iter().map(|&n| (n, t.get(&n.0).copied().unwrap_or(0.0) / total)))
            }
            None => TrustVector::uniform(nodes.iter().copied()),
        };
        let mut sim = Simulation {
            cfg: cfg.clone(),
            mode,
            faults: FaultPlan::new(cfg.faults.clone()),
            channels: Vec::new(),
            gateway: Gateway::new(Registry::new()),
            trust_ledger: TrustLedger::new(nodes.iter().copied()),
            trust,
            epoch: 0,
            workload: WorkloadGen::new(cfg.seed),
            metrics: Metrics::new(&cfg.name, cfg.seed, mode),
            trace: None,
            now: 1,
            round: 0,
            awaiting: BTreeMap::new(),
            admitted: BTreeMap::new(),
        };
        sim.snapshot_trust();
        let mut patient_channels = 0;
        for spec in &cfg.channels {
            let open = Transaction {
                tx_id: 0,
                origin: Origin::new("-", "-", "-", None),
                kind: TxKind::ProtocolEvent,
                submitter: format!("node-{}", spec.client),
                payload: Payload::Inline(format!("open channel {}", spec.name).into_bytes()),
                timestamp: 0,
            };
            let genesis = build_genesis(vec![open], 0, cfg.difficulty)?;
            let chain = Channel::new(spec.name.clone(), spec.active_set(), NodeId(spec.client), genesis)?;
            let devices = if spec.role == ChannelRole::Patient {
                let suffix = if patient_channels == 0 { String::new() } else { format!("-{}", spec.name) };
                patient_channels += 1;
                sim.workload.enroll(&mut sim.gateway, spec, &cfg.workload, &suffix, 0)?
            } else {
                Vec::new()
            };
            sim.channels.push(ChannelState { spec: spec.clone(), chain, pending: Vec::new(), devices, view: 0 });
        }
        sim.route_gateway_records();
        Ok(sim)
    }

    /// Keeps every message sent for export.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    /// Schedules `behavior` for `node` over rounds `start..end`.
    pub fn inject_fault(&mut self, node: NodeId, behavior: NodeBehavior, start: u64, end: u64) -> Result<(), SimError> {
        if node.0 == 0 || node.0 > self.cfg.node_count {
            return Err(SimError::UnknownNode(node));
        }
        if start > end || start >= self.cfg.rounds {
            return Err(SimError::WindowOutsideHorizon { start, end, rounds: self.cfg.rounds });
        }
        self.faults.push(FaultSpec { node: node.0, behavior, start, end });
        Ok(())
    }

    pub fn channels(&self) -> &[ChannelState] {
        &self.channels
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.spec.name == name).map(|c| &c.chain)
    }

    pub fn trust(&self) -> &TrustVector {
        &self.trust
    }

    pub fn trust_ledger(&self) -> &TrustLedger {
        &self.trust_ledger
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn write_trace_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for rec in self.trace() {
            writeln!(out, "{}", serde_json::to_string(rec)?)?;
        }
        Ok(())
    }

    pub fn rounds_done(&self) -> u64 {
        self.round
    }

    /// Runs every remaining round and the end-of-run scans.
    pub fn run_to_end(&mut self) -> Result<&Metrics, SimError> {
        while self.round < self.cfg.rounds {
            self.step_round()?;
        }
        self.finish();
        Ok(&self.metrics)
    }

    /// One consensus round on every channel, in configuration order.
    pub fn step_round(&mut self) -> Result<(), SimError> {
        for ci in 0..self.channels.len() {
            self.generate_workload(ci)?;
            self.channel_round(ci)?;
        }
        self.round += 1;
        Ok(())
    }

    fn behavior(&self, node: NodeId) -> NodeBehavior {
        self.faults.behavior_at(node, self.round)
    }

    fn snapshot_trust(&mut self) {
        self.metrics.trust_trajectory.push(TrustSnapshot {
            epoch: self.epoch,
            values: self.trust.values.iter().map(|(k, v)| (k.0, *v)).collect(),
            iterations: self.trust.iteration_count,
            converged: self.trust.converged,
        });
    }

    fn recompute_trust(&mut self) -> Result<(), SimError> {
        self.trust = recompute(&self.trust_ledger, Some(&self.trust))?;
        self.epoch += 1;
        self.snapshot_trust();
        Ok(())
    }

    fn admit(&mut self, ci: usize, tx: Transaction) {
        self.admitted.insert(tx.tx_id, ci);
        self.metrics.transactions_admitted += 1;
        self.channels[ci].pending.push(tx);
    }

    fn route_gateway_records(&mut self) {
        for rec in self.gateway.take_ledger_records() {
            let Some(ci) = self.channels.iter().position(|c| c.spec.name == rec.channel) else { continue };
            let tx = self.workload.record_tx(rec);
            self.admit(ci, tx);
        }
    }

    fn generate_workload(&mut self, ci: usize) -> Result<(), SimError> {
        let spec = self.channels[ci].spec.clone();
        let wl = self.cfg.workload.clone();
        let time = self.now;
        match spec.role {
            ChannelRole::Activity => {
                for tx in self.workload.activity(&wl, NodeId(spec.client), self.round, time) {
                    self.admit(ci, tx);
                }
            }
            ChannelRole::Telemetry => {
                let (txs, injected) = self.workload.telemetry(&wl, NodeId(spec.client), time);
                for tx in txs {
                    self.admit(ci, tx);
                }
                self.metrics.telemetry_deviations_injected.extend(injected);
            }
            ChannelRole::Patient => {
                let devices = self.channels[ci].devices.clone();
                for reading in self.workload.readings(&devices, &wl, time) {
                    let decision = self.gateway.submit(reading.request.clone(), &self.trust)?;
                    *self.metrics.policy_decisions.entry(format!("{:?}", decision.outcome)).or_default() += 1;
                    if decision.outcome.is_granted() {
                        let tx = self.workload.reading_tx(&reading, &mut self.gateway.store);
                        self.admit(ci, tx);
                        self.awaiting.insert(decision.decision_hash, decision);
                    } else if self.mode == Mode::Tpbft {
                        self.gateway.te_update(&decision, false, &mut self.trust_ledger)?;
                    }
                }
                self.metrics.policy_generations = self.gateway.generations as u64;
                self.route_gateway_records();
            }
        }
        Ok(())
    }

    fn groups(&self, ci: usize) -> Result<(ConsensusGroup, PrimaryGroup), SimError> {
        let state = &self.channels[ci];
        let active = state.spec.active_set();
        match self.mode {
            Mode::Tpbft => {
                let cg = build_consensus_group(&self.trust, &self.cfg.group, &active)?;
                let pg = build_primary_group(&cg, &self.trust, &self.cfg.group)?;
                Ok((cg, pg))
            }
            Mode::Baseline => {
                let members: Vec<NodeId> = active.into_iter().collect();
                let primary = members[(state.view % members.len() as u64) as usize];
                let f = max_faulty(members.len());
                Ok((ConsensusGroup { members, f }, PrimaryGroup { members: vec![primary] }))
            }
        }
    }

    fn channel_round(&mut self, ci: usize) -> Result<(), SimError> {
        let name = self.channels[ci].spec.name.clone();
        let height = self.channels[ci].chain.height() + 1;
        let cap = self.cfg.workload.max_block_txs;
        let mut record = RoundRecord { round: self.round, channel: name.clone(), height, ..Default::default() };
        if self.channels[ci].pending.is_empty() {
            self.metrics.rounds.push(record);
            return Ok(());
        }
        let batch: Vec<Transaction> = self.channels[ci].pending.iter().take(cap).cloned().collect();
        record.block_txs = batch.len();
        let mut failed = BTreeSet::new();
        let max_attempts = self.channels[ci].spec.active.len() as u32;
        loop {
            let (cg, pg) = self.groups(ci)?;
            record.cg_size = cg.len();
            record.f = cg.f;
            self.metrics.group_membership_per_epoch.push(GroupSnapshot {
                epoch: self.epoch,
                round: self.round,
                channel: name.clone(),
                consensus_group: cg.members.iter().map(|n| n.0).collect(),
                primary_group: pg.members.iter().map(|n| n.0).collect(),
                f: cg.f,
            });
            let proposer = match select_proposer(&pg, height, &failed) {
                Replacement::Proposer(p) => p,
                Replacement::ViewChangeFallback => {
                    info!("{name} round {}: every primary-group member failed", self.round);
                    self.metrics.view_change_fallbacks += 1;
                    self.metrics.rounds_aborted += 1;
                    record.fallback = true;
                    break;
                }
            };
            if record.attempts >= max_attempts {
                self.metrics.rounds_aborted += 1;
                break;
            }
            record.attempts += 1;
            record.proposer = Some(proposer.0);
            let attempt = self.run_attempt(ci, &cg, &pg, proposer, batch.clone(), record.attempts - 1);
            record.messages += attempt.messages;
            self.record_rejections(ci, &attempt);
            self.now = attempt.end + 1;
            match attempt.outcome {
                AttemptOutcome::Finalized { hash, at } => {
                    let start = attempt.deadline - 4 * self.cfg.stage_timeout;
                    record.prepared_at = attempt
                        .replicas
                        .iter()
                        .filter(|(n, _)| self.behavior(**n).is_honest())
                        .filter_map(|(_, r)| r.prepared_at)
                        .collect();
                    let before = self.metrics.safety_violations;
                    let applied = self.apply_finalized(ci, &attempt, hash)?;
                    record.violations += self.metrics.safety_violations - before;
                    if applied {
                        record.finalized = true;
                        record.latency = Some(at - start);
                        self.metrics.rounds_finalized += 1;
                        self.metrics.latency_per_round.push(at - start);
                        if self.mode == Mode::Tpbft {
                            record.messages += self.sync_acks(ci, &cg, proposer, hash, record.attempts - 1)?;
                            self.observe_finalized(&attempt)?;
                            self.recompute_trust()?;
                        }
                    } else {
                        self.metrics.rounds_aborted += 1;
                    }
                    break;
                }
                AttemptOutcome::Conflict(a, b) => {
                    self.metrics.violation(
                        self.round,
                        &name,
                        height,
                        "ConflictingFinal",
                        format!("{} and {} both reached f+1 replies", short(&a), short(&b)),
                    );
                    record.violations += 1;
                    self.metrics.rounds_aborted += 1;
                    break;
                }
                AttemptOutcome::Aborted => {
                    debug!("{name} round {} attempt {} aborted, proposer {proposer}", self.round, record.attempts);
                    match self.mode {
                        Mode::Tpbft => {
                            failed.insert(proposer);
                            self.observe_aborted(&attempt, proposer)?;
                            self.recompute_trust()?;
                        }
                        Mode::Baseline => {
                            let n = cg.len() as u64;
                            let live = cg.members.iter().filter(|m| self.behavior(**m) != NodeBehavior::CrashSilent).count() as u64;
                            self.metrics.view_changes += 1;
                            record.view_changes += 1;
                            self.metrics.add_messages(MessageKind::ViewChange, live * (n - 1));
                            self.metrics.add_messages(MessageKind::NewView, n - 1);
                            record.messages += live * (n - 1) + (n - 1);
                            self.channels[ci].view += 1;
                        }
                    }
                }
            }
        }
        self.metrics.rounds.push(record);
        Ok(())
    }

    fn run_attempt(
        &mut self,
        ci: usize,
        cg: &ConsensusGroup,
        pg: &PrimaryGroup,
        proposer: NodeId,
        batch: Vec<Transaction>,
        attempt: u32,
    ) -> Attempt {
        let start = self.now;
        let deadline = start + 4 * self.cfg.stage_timeout;
        let chain = &self.channels[ci].chain;
        let client_label = chain.client_node;
        let mut replicas: BTreeMap<NodeId, Replica> = cg
            .members
            .iter()
            .map(|&m| {
                let tip = chain.copy_of(m).and_then(|c| c.last()).unwrap_or_else(|| chain.tip());
                (m, Replica::new(m, cg, pg, tip, Dest::Client(client_label)))
            })
            .collect();
        let behaviors: BTreeMap<NodeId, NodeBehavior> = cg.members.iter().map(|&m| (m, self.behavior(m))).collect();
        let mut client = Client::new(client_label, cg);
        let mut queue = EventQueue::new();
        let mut messages = 0u64;
        let mut end = start;
        let mut outcome = AttemptOutcome::Aborted;
        let mut finalized_at = None;

        let crashed = |n: &NodeId| behaviors[n] == NodeBehavior::CrashSilent;
        if !crashed(&proposer) {
            let out = replicas.get_mut(&proposer).expect("proposer in group").propose(batch, start);
            if let Ok(out) = out {
                messages += self.send(ci, attempt, proposer, behaviors[&proposer], &replicas, out, start, &mut queue);
            }
            queue.push(start + self.cfg.stage_timeout, TIMER_SENDER, Event::StageTimeout(proposer));
        }
        queue.push(deadline, TIMER_SENDER, Event::Deadline);

        while let Some((tick, event)) = queue.pop() {
            end = end.max(tick);
            match event {
                Event::Deadline => {
                    if finalized_at.is_none() && !matches!(outcome, AttemptOutcome::Conflict(..)) {
                        outcome = AttemptOutcome::Aborted;
                        break;
                    }
                }
                Event::StageTimeout(p) => {
                    let out = replicas.get_mut(&p).map(Replica::on_stage_timeout).unwrap_or_default();
                    messages += self.send(ci, attempt, p, behaviors[&p], &replicas, out, tick, &mut queue);
                }
                Event::Deliver(env) => match env.to {
                    Dest::Node(n) => {
                        if crashed(&n) {
                            continue;
                        }
                        let Some(r) = replicas.get_mut(&n) else { continue };
                        let out = r.handle(&env.msg, tick);
                        messages += self.send(ci, attempt, n, behaviors[&n], &replicas, out, tick, &mut queue);
                    }
                    Dest::Client(_) => match client.on_reply(&env.msg) {
                        Finality::Finalized(h) if finalized_at.is_none() => {
                            finalized_at = Some(tick);
                            outcome = AttemptOutcome::Finalized { hash: h, at: tick };
                        }
                        Finality::ConflictingFinal(a, b) => outcome = AttemptOutcome::Conflict(a, b),
                        _ => {}
                    },
                },
            }
        }
        if matches!(outcome, AttemptOutcome::Aborted) {
            end = deadline;
        }
        Attempt { outcome, replicas, client, deadline, end, messages }
    }

    #[allow(clippy::too_many_arguments)]
    fn send(
        &mut self,
        ci: usize,
        attempt: u32,
        sender: NodeId,
        behavior: NodeBehavior,
        replicas: &BTreeMap<NodeId, Replica>,
        out: Vec<Envelope>,
        tick: u64,
        queue: &mut EventQueue,
    ) -> u64 {
        let held = replicas.get(&sender).and_then(Replica::block);
        let mut sent = 0;
        for env in out {
            let Some((env, extra)) = apply_behavior(behavior, env, held) else { continue };
            sent += 1;
            self.metrics.count_message(env.msg.kind);
            let key = LinkKey {
                channel: &self.channels[ci].spec.name,
                round: self.round,
                attempt,
                sender,
                dest: env.to,
                kind: env.msg.kind,
                block_hash: &env.msg.block_hash,
            };
            let delay = sample_link(self.cfg.seed, &self.cfg.latency, &key);
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceRecord {
                    kind: env.msg.kind,
                    height: env.msg.height,
                    sender,
                    receiver: env.to,
                    sim_time: tick,
                    block_hash: env.msg.block_hash,
                    channel: self.channels[ci].spec.name.clone(),
                    delivered: delay.is_some(),
                });
            }
            match delay {
                Some(d) => queue.push(tick + d + extra, sender.0, Event::Deliver(env)),
                None => self.metrics.messages_dropped += 1,
            }
        }
        sent
    }

    fn record_rejections(&mut self, ci: usize, attempt: &Attempt) {
        for (&node, r) in &attempt.replicas {
            if !self.behavior(node).is_honest() {
                continue;
            }
            for &(sender, reason) in &r.rejections {
                if matches!(reason, RejectReason::SimulationMismatch | RejectReason::HashMismatch) {
                    self.metrics.tamper_detections += 1;
                    self.metrics.tamper_events.push(TamperDetection {
                        round: self.round,
                        channel: self.channels[ci].spec.name.clone(),
                        detector: node.0,
                        sender: sender.0,
                        reason: format!("{reason:?}"),
                    });
                }
            }
        }
    }

    /// Appends a finalized block everywhere it belongs and runs the safety
    /// checks. Returns whether the block made it onto the chain.
    fn apply_finalized(&mut self, ci: usize, attempt: &Attempt, hash: Digest) -> Result<bool, SimError> {
        let name = self.channels[ci].spec.name.clone();
        let height = self.channels[ci].chain.height() + 1;
        let holder = attempt
            .replicas
            .iter()
            .filter(|(n, _)| self.behavior(**n).is_honest())
            .find_map(|(_, r)| r.block().filter(|b| b.hash() == hash).cloned());
        let Some(block) = holder else {
            self.metrics.violation(
                self.round,
                &name,
                height,
                "UnbackedFinal",
                format!("client finalized {} which no honest node holds", short(&hash)),
            );
            return Ok(false);
        };
        let cert = FinalityCertificate {
            block_hash: hash,
            height: block.height(),
            replies: attempt.client.replies.get(&hash).map_or(0, BTreeSet::len),
        };
        for (&node, r) in &attempt.replicas {
            if self.behavior(node) == NodeBehavior::CrashSilent {
                continue;
            }
            if let (Some(c), Some(own)) = (r.committed, r.block()) {
                if own.hash() == c {
                    self.channels[ci].chain.append_local(node, own)?;
                }
            }
        }
        let report = self.channels[ci].chain.replicate_to_channel(&block, &cert)?;
        if !report.divergent.is_empty() || !report.lagging.is_empty() {
            self.metrics.violation(
                self.round,
                &name,
                height,
                "DivergentReplica",
                format!("divergent {:?}, lagging {:?}", report.divergent, report.lagging),
            );
        }
        if !self.channels[ci].chain.tips_agree() {
            self.metrics.divergent_tips += 1;
            self.metrics.violation(self.round, &name, height, "DivergentTips", "active nodes disagree on the tip".into());
        }
        let included: BTreeSet<u64> = block.transactions().iter().map(|t| t.tx_id).collect();
        self.channels[ci].pending.retain(|t| !included.contains(&t.tx_id));
        self.metrics.transactions_finalized += included.len() as u64;
        for tx in block.transactions() {
            let Some(d) = decision_hash_in(tx.payload.bytes()) else { continue };
            if let Some(decision) = self.awaiting.remove(&d) {
                if self.mode == Mode::Tpbft {
                    self.gateway.te_update(&decision, true, &mut self.trust_ledger)?;
                }
            }
        }
        Ok(true)
    }

    /// Active nodes outside the consensus group confirm the replicated
    /// block to the proposer, which judges each confirmation.
    fn sync_acks(&mut self, ci: usize, cg: &ConsensusGroup, proposer: NodeId, hash: Digest, attempt: u32) -> Result<u64, SimError> {
        let block = self.channels[ci].chain.tip().clone();
        let outsiders: Vec<NodeId> = self.channels[ci].chain.active_nodes.iter().copied().filter(|n| !cg.contains(*n)).collect();
        let mut sent = 0;
        for node in outsiders {
            let env = Envelope {
                to: Dest::Node(proposer),
                msg: ConsensusMessage::new(MessageKind::SyncAck, block.height(), hash, node),
            };
            let mut ok = false;
            if let Some((env, _)) = apply_behavior(self.behavior(node), env, Some(&block)) {
                sent += 1;
                self.metrics.count_message(MessageKind::SyncAck);
                let key = LinkKey {
                    channel: &self.channels[ci].spec.name,
                    round: self.round,
                    attempt,
                    sender: node,
                    dest: env.to,
                    kind: MessageKind::SyncAck,
                    block_hash: &env.msg.block_hash,
                };
                let delivered = sample_link(self.cfg.seed, &self.cfg.latency, &key).is_some();
                if let Some(trace) = self.trace.as_mut() {
                    trace.push(TraceRecord {
                        kind: MessageKind::SyncAck,
                        height: env.msg.height,
                        sender: node,
                        receiver: env.to,
                        sim_time: self.now,
                        block_hash: env.msg.block_hash,
                        channel: self.channels[ci].spec.name.clone(),
                        delivered,
                    });
                }
                if !delivered {
                    self.metrics.messages_dropped += 1;
                }
                ok = delivered && env.msg.block_hash == hash && env.msg.fingerprint_valid();
            }
            let outcome = if ok { TxOutcome::Satisfactory } else { TxOutcome::Unsatisfactory };
            self.record([Observation { from: proposer, to: node, outcome }])?;
        }
        Ok(sent)
    }

    fn record(&mut self, obs: impl IntoIterator<Item = Observation>) -> Result<(), SimError> {
        for o in obs {
            if o.from != o.to {
                self.trust_ledger.record_transaction(o.from, o.to, o.outcome)?;
            }
        }
        Ok(())
    }

    fn observe_finalized(&mut self, attempt: &Attempt) -> Result<(), SimError> {
        for (&node, r) in &attempt.replicas {
            if self.behavior(node) == NodeBehavior::CrashSilent {
                continue;
            }
            self.record(r.observations.clone())?;
            self.record(r.prepare_observations(attempt.deadline))?;
        }
        Ok(())
    }

    fn observe_aborted(&mut self, attempt: &Attempt, proposer: NodeId) -> Result<(), SimError> {
        for (&node, r) in &attempt.replicas {
            if self.behavior(node) == NodeBehavior::CrashSilent {
                continue;
            }
            self.record(r.observations.clone())?;
            if node != proposer {
                self.record([Observation { from: node, to: proposer, outcome: TxOutcome::Unsatisfactory }])?;
            }
        }
        Ok(())
    }

    /// End-of-run scans: tips, pending set, isolation, submitters, telemetry.
    pub fn finish(&mut self) {
        let mut m = std::mem::take(&mut self.metrics);
        m.final_tips = self.channels.iter().map(|c| (c.spec.name.clone(), c.chain.tip().hash().to_hex())).collect();
        m.transactions_pending = self.channels.iter().map(|c| c.pending.len() as u64).sum();
        m.isolation_violations = self.isolation_violations();
        m.unregistered_submitters = self
            .channels
            .iter()
            .flat_map(|c| c.chain.canonical().iter().flat_map(Block::transactions))
            .filter(|t| t.submitter.starts_with("wallet:") && !self.gateway.registry.is_registered_submitter(&t.submitter))
            .count() as u64;
        m.telemetry_deviations_found = self
            .channels
            .iter()
            .filter(|c| c.spec.role == ChannelRole::Telemetry)
            .map(|c| c.chain.trace(|t| t.telemetry().is_some_and(|r| out_of_band(&r))).len() as u64)
            .sum();
        self.metrics = m;
    }

    /// Structural scan: inactive nodes hold no copy of a channel, and no
    /// transaction admitted to one channel shows up on another.
    fn isolation_violations(&self) -> u64 {
        let mut bad = 0;
        for (ci, c) in self.channels.iter().enumerate() {
            for n in 1..=self.cfg.node_count {
                let node = NodeId(n);
                if !c.chain.is_active(node) && (c.chain.copy_of(node).is_some() || c.chain.bytes_held_by(node) > 0) {
                    bad += 1;
                }
            }
            for (_, copy) in c.chain.copies() {
                bad += copy
                    .iter()
                    .skip(1)
                    .flat_map(Block::transactions)
                    .filter(|t| self.admitted.get(&t.tx_id) != Some(&ci))
                    .count() as u64;
            }
        }
        bad
    }

    /// Per-epoch trust table: (epoch, node, trust, in any consensus group,
    /// in any primary group), with groups rebuilt from each snapshot.
    pub fn trust_table(&self) -> Vec<TrustRow> {
        let mut rows = Vec::new();
        for snap in &self.metrics.trust_trajectory {
            let tv = TrustVector::from_values(snap.values.iter().map(|(&k, &v)| (NodeId(k), v)));
            let mut in_cg = BTreeSet::new();
            let mut in_pg = BTreeSet::new();
            for c in &self.channels {
                let Ok(cg) = build_consensus_group(&tv, &self.cfg.group, &c.spec.active_set()) else { continue };
                if let Ok(pg) = build_primary_group(&cg, &tv, &self.cfg.group) {
                    in_pg.extend(pg.members);
                }
                in_cg.extend(cg.members);
            }
            for (&k, &v) in &snap.values {
                rows.push(TrustRow {
                    epoch: snap.epoch,
                    node: k,
                    trust: v,
                    in_cg: in_cg.contains(&NodeId(k)),
                    in_pg: in_pg.contains(&NodeId(k)),
                });
            }
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TrustRow {
    pub epoch: u64,
    pub node: u32,
    pub trust: f64,
    #[serde(rename = "in_CG")]
    pub in_cg: bool,
    #[serde(rename = "in_PG")]
    pub in_pg: bool,
}

fn short(d: &Digest) -> String {
    d.to_hex()[..12].to_string()
}

/// Runs a scenario under T-PBFT.
pub fn run(cfg: &ScenarioConfig) -> Result<Metrics, SimError> {
    let mut sim = Simulation::new(cfg, Mode::Tpbft)?;
    sim.run_to_end()?;
    Ok(sim.metrics)
}

/// The same scenario under flat PBFT over every active node of each
/// channel: one primary, view changes on primary failure, no trust.
pub fn baseline_pbft_mode(cfg: &ScenarioConfig) -> Result<Metrics, SimError> {
    let mut sim = Simulation::new(cfg, Mode::Baseline)?;
    sim.run_to_end()?;
    Ok(sim.metrics)
}
