use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::SCHEMA_VERSION;
use super::workload::InjectedDeviation;
use crate::consensus::MessageKind;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Tpbft,
    Baseline,
}

/// One channel's consensus round, over all of its attempts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub channel: String,
    pub height: u64,
    pub attempts: u32,
    pub messages: u64,
    /// Ticks from the start of the successful attempt to client finality.
    pub latency: Option<u64>,
    pub finalized: bool,
    pub violations: u64,
    pub proposer: Option<u32>,
    pub cg_size: usize,
    pub f: usize,
    pub block_txs: usize,
    /// Vote count each honest replica saw when its prepare quorum formed.
    pub prepared_at: Vec<usize>,
    pub view_changes: u64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustSnapshot {
    pub epoch: u64,
    pub values: BTreeMap<u32, f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSnapshot {
    /// The trust epoch the groups were built from.
    pub epoch: u64,
    pub round: u64,
    pub channel: String,
    pub consensus_group: Vec<u32>,
    pub primary_group: Vec<u32>,
    pub f: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyEvent {
    pub round: u64,
    pub channel: String,
    pub height: u64,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TamperDetection {
    pub round: u64,
    pub channel: String,
    pub detector: u32,
    pub sender: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub mode: Mode,
    pub rounds_finalized: u64,
    pub rounds_aborted: u64,
    pub safety_violations: u64,
    pub safety_events: Vec<SafetyEvent>,
    pub divergent_tips: u64,
    pub view_change_fallbacks: u64,
    pub view_changes: u64,
    pub messages_total: u64,
    pub messages_by_kind: BTreeMap<String, u64>,
    pub messages_dropped: u64,
    pub latency_per_round: Vec<u64>,
    pub rounds: Vec<RoundRecord>,
    pub trust_trajectory: Vec<TrustSnapshot>,
    pub group_membership_per_epoch: Vec<GroupSnapshot>,
    pub policy_decisions: BTreeMap<String, u64>,
    pub policy_generations: u64,
    pub tamper_detections: u64,
    pub tamper_events: Vec<TamperDetection>,
    pub telemetry_deviations_injected: Vec<InjectedDeviation>,
    pub telemetry_deviations_found: u64,
    pub transactions_admitted: u64,
    pub transactions_finalized: u64,
    pub transactions_pending: u64,
    /// Tip header hash per channel, hex.
    pub final_tips: BTreeMap<String, String>,
    pub isolation_violations: u64,
    pub unregistered_submitters: u64,
}

impl Metrics {
    pub fn new(scenario: &str, seed: u64, mode: Mode) -> Self {
        Metrics {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.to_string(),
            seed,
            mode,
            messages_by_kind: MessageKind::ALL.iter().map(|k| (k.to_string(), 0)).collect(),
            ..Default::default()
        }
    }

    pub fn count_message(&mut self, kind: MessageKind) {
        self.messages_total += 1;
        *self.messages_by_kind.entry(kind.to_string()).or_default() += 1;
    }

    pub fn add_messages(&mut self, kind: MessageKind, n: u64) {
        self.messages_total += n;
        *self.messages_by_kind.entry(kind.to_string()).or_default() += n;
    }

    pub fn violation(&mut self, round: u64, channel: &str, height: u64, kind: &str, detail: String) {
        self.safety_violations += 1;
        self.safety_events.push(SafetyEvent {
            round,
            channel: channel.to_string(),
            height,
            kind: kind.to_string(),
            detail,
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// Per-round rows for plotting.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        #[derive(Serialize)]
        struct Row<'a> {
            round: u64,
            channel: &'a str,
            messages: u64,
            latency: Option<u64>,
            finalized: bool,
            violations: u64,
        }
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rounds {
            w.serialize(Row {
                round: r.round,
                channel: &r.channel,
                messages: r.messages,
                latency: r.latency,
                finalized: r.finalized,
                violations: r.violations,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut m = Metrics::new("t", 4, Mode::Tpbft);
        m.count_message(MessageKind::Prepare);
        m.violation(0, "c", 1, "ConflictingFinal", "x".into());
        let back: Metrics = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.messages_by_kind["Prepare"], 1);
        assert_eq!(back.messages_by_kind["NewView"], 0);
    }

    #[test]
    fn csv_header() {
        let mut m = Metrics::new("t", 4, Mode::Tpbft);
        m.rounds.push(RoundRecord { round: 2, channel: "c".into(), messages: 9, latency: Some(5), finalized: true, ..Default::default() });
        let mut buf = Vec::new();
        m.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "round,channel,messages,latency,finalized,violations\n2,c,9,5,true,0\n");
    }
}
