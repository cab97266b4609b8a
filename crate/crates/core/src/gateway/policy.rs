use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::registry::{AttributeSet, DeviceRegistration, Enrollment, Registry, TrustLevels, WdType};
use super::store::ContentStore;
use super::GatewayError;
use crate::ledger::{sha256, sha256_parts, Digest, Origin, TxKind, Zone};
use crate::trust::{NodeId, TrustError, TrustLedger, TrustVector, TxOutcome};

/// How long an issued session token stays valid, in ticks.
pub const SESSION_TTL: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PolicyPattern {
    pub zone: Zone,
    pub wd_type: WdType,
    pub kind: TxKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub policy_id: String,
    /// Device side of the match: zone and device type.
    pub subject_zone: Zone,
    pub subject_wd_type: WdType,
    /// Data side of the match.
    pub object_kind: TxKind,
    pub min_trust: f64,
    pub permitted_kinds: BTreeSet<TxKind>,
    #[serde(skip)]
    pub content_hash: Digest,
}

impl Policy {
    pub fn pattern(&self) -> PolicyPattern {
        PolicyPattern { zone: self.subject_zone, wd_type: self.subject_wd_type, kind: self.object_kind }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("policy serializes")
    }

    /// The bit the decision hangs on.
    pub fn permits(&self, pattern: &PolicyPattern, levels: &TrustLevels) -> bool {
        self.pattern() == *pattern && levels.global_trust >= self.min_trust && self.permitted_kinds.contains(&pattern.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRequest {
    pub request_id: u64,
    pub wallet_tag: Digest,
    pub kind: TxKind,
    pub attributes: AttributeSet,
    pub time: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DecisionOutcome {
    AccessGranted,
    AccessDenied,
    PolicyGeneratedThenGranted,
    PolicyGeneratedThenDenied,
}

impl DecisionOutcome {
    pub fn is_granted(self) -> bool {
        matches!(self, DecisionOutcome::AccessGranted | DecisionOutcome::PolicyGeneratedThenGranted)
    }

    pub fn generated(self) -> bool {
        matches!(self, DecisionOutcome::PolicyGeneratedThenGranted | DecisionOutcome::PolicyGeneratedThenDenied)
    }

    fn tag(self) -> u8 {
        self as u8 + 1
    }
}

/// Opaque binding standing in for the encrypted patient-to-PI channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    pub device_id: String,
    pub pi_node: NodeId,
    pub expires_at: u64,
    pub token: Digest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub request_id: u64,
    pub outcome: DecisionOutcome,
    pub matched_policy: Option<String>,
    pub policy_hash: Option<Digest>,
    pub decision_hash: Digest,
    pub patient_id: String,
    pub device_id: String,
    pub patient_node: NodeId,
    pub pi_node: NodeId,
    pub channel: String,
    pub kind: TxKind,
    pub trust_levels: TrustLevels,
    pub session: Option<SessionToken>,
    pub time: u64,
}

/// Something the gateway wants written to a channel ledger. The harness
/// turns these into transactions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerRecord {
    pub channel: String,
    pub origin: Origin,
    pub submitter: String,
    pub payload: Vec<u8>,
    pub time: u64,
}

pub const REGISTRATION_MAGIC: &[u8; 4] = b"REG1";
pub const DECISION_MAGIC: &[u8; 4] = b"DEC1";
pub const POLICY_MAGIC: &[u8; 4] = b"POL1";

/// Extracts the decision hash from a ledgered decision payload.
pub fn decision_hash_in(payload: &[u8]) -> Option<Digest> {
    let rest = payload.strip_prefix(DECISION_MAGIC.as_slice())?;
    let bytes: [u8; 32] = rest.get(..32)?.try_into().ok()?;
    Some(Digest(bytes))
}

/// A request that passed the edge, with what the PIP knows about it.
#[derive(Debug, Clone, PartialEq)]
pub struct Forwarded {
    pub request: PolicyRequest,
    pub device: DeviceRegistration,
    pub enrollment: Enrollment,
}

/// PEP, PDP, PE and TE around one registry and content store.
#[derive(Debug, Clone, Default)]
pub struct Gateway {
    pub registry: Registry,
    pub store: ContentStore,
    index: BTreeMap<PolicyPattern, Digest>,
    queue: VecDeque<Forwarded>,
    decisions: Vec<PolicyDecision>,
    applied: BTreeSet<Digest>,
    records: Vec<LedgerRecord>,
    pub generations: usize,
}

impl Gateway {
    pub fn new(registry: Registry) -> Self {
        Gateway { registry, ..Default::default() }
    }

    /// Registers a device and queues the registration event for the
    /// patient's channel.
    pub fn register_device(
        &mut self,
        patient_id: &str,
        device_id: &str,
        wd_type: WdType,
        time: u64,
    ) -> Result<DeviceRegistration, GatewayError> {
        let reg = self.registry.register_device(patient_id, device_id, wd_type, time, &mut self.store)?;
        let enrollment = self.registry.enrollment(patient_id).cloned().expect("checked by registry");
        let mut payload = REGISTRATION_MAGIC.to_vec();
        payload.extend_from_slice(reg.wallet.public_tag.as_bytes());
        payload.extend_from_slice(reg.attributes_digest.as_bytes());
        self.records.push(LedgerRecord {
            channel: enrollment.channel.clone(),
            origin: Origin::new(&enrollment.country, &enrollment.site, patient_id, Some(reg.zone)),
            submitter: reg.wallet.submitter(),
            payload,
            time,
        });
        Ok(reg)
    }

    /// Edge check. Unregistered wallets and incomplete attribute sets
    /// never reach the PDP.
    pub fn pep_receive(&mut self, request: PolicyRequest) -> Result<(), GatewayError> {
        let device = self
            .registry
            .by_wallet(&request.wallet_tag)
            .cloned()
            .ok_or(GatewayError::UnregisteredDevice(request.wallet_tag))?;
        if !request.attributes.is_complete() {
            return Err(GatewayError::MalformedAttributes(request.request_id));
        }
        let enrollment = self
            .registry
            .enrollment(&device.patient_id)
            .cloned()
            .ok_or_else(|| GatewayError::UnknownPatient(device.patient_id.clone()))?;
        self.queue.push_back(Forwarded { request, device, enrollment });
        Ok(())
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    /// Evaluates everything the PEP forwarded, in arrival order.
    pub fn process_queue(&mut self, trust: &TrustVector) -> Result<Vec<PolicyDecision>, GatewayError> {
        let mut out = Vec::new();
        while let Some(fwd) = self.queue.pop_front() {
            out.push(self.pdp_evaluate(&fwd, trust)?);
        }
        Ok(out)
    }

    /// PEP then PDP for a single request.
    pub fn submit(&mut self, request: PolicyRequest, trust: &TrustVector) -> Result<PolicyDecision, GatewayError> {
        self.pep_receive(request)?;
        let fwd = self.queue.pop_back().expect("just queued");
        self.pdp_evaluate(&fwd, trust)
    }

    fn fetch_policy(&self, digest: &Digest) -> Result<Policy, GatewayError> {
        let bytes = self.store.get(digest)?;
        let mut policy: Policy = serde_json::from_slice(bytes).map_err(|_| GatewayError::StoreCorruption(*digest))?;
        policy.content_hash = *digest;
        Ok(policy)
    }

    pub fn pdp_evaluate(&mut self, fwd: &Forwarded, trust: &TrustVector) -> Result<PolicyDecision, GatewayError> {
        let req = &fwd.request;
        let patient_trust = trust.get(fwd.enrollment.patient_node).unwrap_or(0.0);
        let levels = TrustLevels {
            patient_trust,
            pi_trust: trust.get(fwd.enrollment.pi_node).unwrap_or(0.0),
            global_trust: patient_trust,
        };
        let pattern = PolicyPattern { zone: fwd.device.zone, wd_type: fwd.device.wd_type, kind: req.kind };
        let (policy, generated) = match self.index.get(&pattern) {
            Some(d) => (self.fetch_policy(d)?, false),
            None => (self.pe_generate_policy(fwd, trust), true),
        };
        let granted = policy.permits(&pattern, &levels);
        let outcome = match (generated, granted) {
            (false, true) => DecisionOutcome::AccessGranted,
            (false, false) => DecisionOutcome::AccessDenied,
            (true, true) => DecisionOutcome::PolicyGeneratedThenGranted,
            (true, false) => DecisionOutcome::PolicyGeneratedThenDenied,
        };
        let decision_hash = sha256_parts(&[
            &req.request_id.to_be_bytes(),
            req.wallet_tag.as_bytes(),
            &[req.kind.tag(), outcome.tag()],
            policy.content_hash.as_bytes(),
            &req.time.to_be_bytes(),
        ]);
        let session = granted.then(|| SessionToken {
            device_id: fwd.device.device_id.clone(),
            pi_node: fwd.enrollment.pi_node,
            expires_at: req.time + SESSION_TTL,
            token: sha256_parts(&[b"session", decision_hash.as_bytes(), fwd.device.wallet.secret_tag.as_bytes()]),
        });
        let decision = PolicyDecision {
            request_id: req.request_id,
            outcome,
            matched_policy: Some(policy.policy_id.clone()),
            policy_hash: Some(policy.content_hash),
            decision_hash,
            patient_id: fwd.device.patient_id.clone(),
            device_id: fwd.device.device_id.clone(),
            patient_node: fwd.enrollment.patient_node,
            pi_node: fwd.enrollment.pi_node,
            channel: fwd.enrollment.channel.clone(),
            kind: req.kind,
            trust_levels: levels,
            session,
            time: req.time,
        };
        let mut payload = DECISION_MAGIC.to_vec();
        payload.extend_from_slice(decision_hash.as_bytes());
        payload.push(outcome.tag());
        self.records.push(LedgerRecord {
            channel: fwd.enrollment.channel.clone(),
            origin: Origin::new(&fwd.enrollment.country, &fwd.enrollment.site, &fwd.device.patient_id, Some(fwd.device.zone)),
            submitter: fwd.device.wallet.submitter(),
            payload,
            time: req.time,
        });
        self.decisions.push(decision.clone());
        Ok(decision)
    }

    /// Synthesizes a policy for the request's exact pattern. The trust bar
    /// is the owner's current global trust, never below `1/N`.
    pub fn pe_generate_policy(&mut self, fwd: &Forwarded, trust: &TrustVector) -> Policy {
        let n = trust.values.len().max(1) as f64;
        let owner = trust.get(fwd.enrollment.patient_node).unwrap_or(0.0);
        let mut policy = Policy {
            policy_id: format!("pol-{}-{:?}-{:?}", fwd.device.zone, fwd.device.wd_type, fwd.request.kind),
            subject_zone: fwd.device.zone,
            subject_wd_type: fwd.device.wd_type,
            object_kind: fwd.request.kind,
            min_trust: owner.max(1.0 / n),
            permitted_kinds: BTreeSet::from([fwd.request.kind]),
            content_hash: Digest::ZERO,
        };
        let digest = self.store.put(&policy.canonical_bytes());
        policy.content_hash = digest;
        self.index.insert(policy.pattern(), digest);
        self.generations += 1;
        let mut payload = POLICY_MAGIC.to_vec();
        payload.extend_from_slice(digest.as_bytes());
        self.records.push(LedgerRecord {
            channel: fwd.enrollment.channel.clone(),
            origin: Origin::new(&fwd.enrollment.country, &fwd.enrollment.site, &fwd.device.patient_id, Some(fwd.device.zone)),
            submitter: "gateway".into(),
            payload,
            time: fwd.request.time,
        });
        policy
    }

    /// Feeds a decision back into the trust ledger once. Granted flows
    /// count only after they finalize on-chain; denials count right away.
    pub fn te_update(
        &mut self,
        decision: &PolicyDecision,
        finalized: bool,
        ledger: &mut TrustLedger,
    ) -> Result<bool, TrustError> {
        if self.applied.contains(&decision.decision_hash) {
            return Ok(false);
        }
        let outcome = match (decision.outcome.is_granted(), finalized) {
            (true, true) => TxOutcome::Satisfactory,
            (true, false) => return Ok(false),
            (false, _) => TxOutcome::Unsatisfactory,
        };
        ledger.record_transaction(decision.patient_node, decision.pi_node, outcome)?;
        self.applied.insert(decision.decision_hash);
        Ok(true)
    }

    pub fn take_ledger_records(&mut self) -> Vec<LedgerRecord> {
        std::mem::take(&mut self.records)
    }

    pub fn decisions(&self) -> &[PolicyDecision] {
        &self.decisions
    }

    pub fn policies(&self) -> Result<Vec<Policy>, GatewayError> {
        self.index.values().map(|d| self.fetch_policy(d)).collect()
    }

    pub fn policy_for(&self, pattern: &PolicyPattern) -> Option<Digest> {
        self.index.get(pattern).copied()
    }

    pub fn write_policies_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in self.policies().map_err(std::io::Error::other)? {
            #[derive(Serialize)]
            struct Line<'a> {
                content_hash: Digest,
                #[serde(flatten)]
                policy: &'a Policy,
            }
            let line = serde_json::to_string(&Line { content_hash: p.content_hash, policy: &p })?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn write_decisions_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for d in &self.decisions {
            writeln!(out, "{}", serde_json::to_string(d)?)?;
        }
        Ok(())
    }
}

/// A request from a registered device with its attributes as stored.
pub fn request_for(device: &DeviceRegistration, request_id: u64, kind: TxKind, time: u64) -> PolicyRequest {
    let mut attributes = device.attributes.clone();
    attributes.environment_timestamp = time;
    PolicyRequest { request_id, wallet_tag: device.wallet.public_tag, kind, attributes, time }
}

/// Hash of a policy's stored bytes, as the store would key it.
pub fn policy_digest(policy: &Policy) -> Digest {
    sha256(&policy.canonical_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gateway() -> Gateway {
        let mut r = Registry::new();
        r.enroll(Enrollment {
            patient_id: "AHJ1001".into(),
            channel: "patient-enrollment".into(),
            patient_node: NodeId(6),
            pi_node: NodeId(5),
            country: "America".into(),
            site: "S1".into(),
        });
        Gateway::new(r)
    }

    fn trust_with(patient: f64) -> TrustVector {
        let rest = (1.0 - patient) / 8.0;
        TrustVector::from_values((1..=9).map(|i| (NodeId(i), if i == 6 { patient } else { rest })))
    }

    #[test]
    fn miss_then_direct_match() {
        let mut g = gateway();
        let ring = g.register_device("AHJ1001", "ring-1", WdType::OuraRing, 0).unwrap();
        let t = trust_with(0.2);
        let first = g.submit(request_for(&ring, 1, TxKind::VitalsReading, 1), &t).unwrap();
        assert_eq!(first.outcome, DecisionOutcome::PolicyGeneratedThenGranted);
        assert!(first.session.is_some());
        let pattern = PolicyPattern { zone: Zone::G, wd_type: WdType::OuraRing, kind: TxKind::VitalsReading };
        let digest = g.policy_for(&pattern).unwrap();
        let stored = g.store.get(&digest).unwrap().to_vec();
        let policy: Policy = serde_json::from_slice(&stored).unwrap();
        assert_eq!(policy_digest(&policy), digest);
        assert_eq!(policy.min_trust, 0.2);

        let second = g.submit(request_for(&ring, 2, TxKind::VitalsReading, 2), &t).unwrap();
        assert_eq!(second.outcome, DecisionOutcome::AccessGranted);
        assert_eq!(g.generations, 1);
    }

    #[test]
    fn low_trust_denied() {
        let mut g = gateway();
        let ear = g.register_device("AHJ1001", "ear-1", WdType::MedicalEarbud, 0).unwrap();
        g.submit(request_for(&ear, 1, TxKind::VitalsReading, 1), &trust_with(0.3)).unwrap();
        let d = g.submit(request_for(&ear, 2, TxKind::VitalsReading, 2), &trust_with(0.1)).unwrap();
        assert_eq!(d.outcome, DecisionOutcome::AccessDenied);
        assert!(d.session.is_none());
    }

    #[test]
    fn generation_floor_is_one_over_n() {
        let mut g = gateway();
        let ear = g.register_device("AHJ1001", "ear-1", WdType::MedicalEarbud, 0).unwrap();
        let d = g.submit(request_for(&ear, 1, TxKind::VitalsReading, 1), &trust_with(0.05)).unwrap();
        assert_eq!(d.outcome, DecisionOutcome::PolicyGeneratedThenDenied);
        assert_eq!(g.policies().unwrap()[0].min_trust, 1.0 / 9.0);
    }

    #[test]
    fn deterministic_generation() {
        let t = trust_with(0.2);
        let hashes: Vec<Digest> = (0..2)
            .map(|_| {
                let mut g = gateway();
                let ring = g.register_device("AHJ1001", "ring-1", WdType::OuraRing, 0).unwrap();
                g.submit(request_for(&ring, 1, TxKind::VitalsReading, 1), &t).unwrap().policy_hash.unwrap()
            })
            .collect();
        assert_eq!(hashes[0], hashes[1]);
    }

    #[test]
    fn edge_rejections() {
        let mut g = gateway();
        let ear = g.register_device("AHJ1001", "ear-1", WdType::MedicalEarbud, 0).unwrap();
        let mut unknown = request_for(&ear, 1, TxKind::VitalsReading, 1);
        unknown.wallet_tag = sha256(b"stranger");
        assert!(matches!(g.pep_receive(unknown), Err(GatewayError::UnregisteredDevice(_))));
        let mut malformed = request_for(&ear, 2, TxKind::VitalsReading, 1);
        malformed.attributes.wd_zone = None;
        assert_eq!(g.pep_receive(malformed), Err(GatewayError::MalformedAttributes(2)));
        assert_eq!(g.queued(), 0);
        assert!(g.decisions().is_empty());
    }

    #[test]
    fn corrupted_policy_surfaces() {
        let mut g = gateway();
        let ear = g.register_device("AHJ1001", "ear-1", WdType::MedicalEarbud, 0).unwrap();
        let d = g.submit(request_for(&ear, 1, TxKind::VitalsReading, 1), &trust_with(0.3)).unwrap();
        g.store.corrupt(&d.policy_hash.unwrap(), b"{}".to_vec());
        assert!(matches!(
            g.submit(request_for(&ear, 2, TxKind::VitalsReading, 2), &trust_with(0.3)),
            Err(GatewayError::StoreCorruption(_))
        ));
    }

    #[test]
    fn trust_feedback_once() {
        let mut g = gateway();
        let ear = g.register_device("AHJ1001", "ear-1", WdType::MedicalEarbud, 0).unwrap();
        let mut ledger = TrustLedger::new((1..=9).map(NodeId));
        let granted = g.submit(request_for(&ear, 1, TxKind::VitalsReading, 1), &trust_with(0.3)).unwrap();
        assert!(!g.te_update(&granted, false, &mut ledger).unwrap());
        assert!(g.te_update(&granted, true, &mut ledger).unwrap());
        assert!(!g.te_update(&granted, true, &mut ledger).unwrap());
        assert_eq!(ledger.counter(NodeId(6), NodeId(5)).sat, 1);

        let denied = g.submit(request_for(&ear, 2, TxKind::VitalsReading, 2), &trust_with(0.1)).unwrap();
        g.te_update(&denied, false, &mut ledger).unwrap();
        g.te_update(&denied, false, &mut ledger).unwrap();
        assert_eq!(ledger.counter(NodeId(6), NodeId(5)).unsat, 1);
    }

    #[test]
    fn one_decision_record_per_request() {
        let mut g = gateway();
        let ear = g.register_device("AHJ1001", "ear-1", WdType::MedicalEarbud, 0).unwrap();
        for i in 0..5 {
            g.submit(request_for(&ear, i, TxKind::VitalsReading, i), &trust_with(0.3)).unwrap();
        }
        let recs = g.take_ledger_records();
        let decisions: BTreeSet<Digest> = recs.iter().filter_map(|r| decision_hash_in(&r.payload)).collect();
        assert_eq!(decisions.len(), 5);
        assert_eq!(recs.iter().filter(|r| r.payload.starts_with(POLICY_MAGIC)).count(), 1);
        assert!(recs.iter().all(|r| r.channel == "patient-enrollment"));
    }

    #[test]
    fn exports() {
        let mut g = gateway();
        let ear = g.register_device("AHJ1001", "ear-1", WdType::MedicalEarbud, 0).unwrap();
        g.submit(request_for(&ear, 1, TxKind::VitalsReading, 1), &trust_with(0.3)).unwrap();
        let mut p = Vec::new();
        g.write_policies_jsonl(&mut p).unwrap();
        assert!(String::from_utf8(p).unwrap().contains("content_hash"));
        let mut d = Vec::new();
        g.write_decisions_jsonl(&mut d).unwrap();
        assert_eq!(String::from_utf8(d).unwrap().lines().count(), 1);
    }
}
