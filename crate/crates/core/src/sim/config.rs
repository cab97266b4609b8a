use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::faults::NodeBehavior;
use crate::groups::GroupConfig;
use crate::ledger::MAX_DIFFICULTY;
use crate::trust::NodeId;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("{field}: {message}")]
    ValidationError { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::ValidationError { field: field.into(), message: message.into() }
}

/// What a channel carries, which decides the workload it receives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelRole {
    /// Patient wearables through the gateway.
    Patient,
    /// Shipment temperature and humidity.
    Telemetry,
    /// Trial activity events from the client node.
    #[default]
    Activity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub name: String,
    pub active: Vec<u32>,
    pub client: u32,
    #[serde(default)]
    pub role: ChannelRole,
    /// Patient channels: the PI node. Defaults to the highest active node
    /// other than the client.
    #[serde(default)]
    pub pi: Option<u32>,
}

impl ChannelSpec {
    pub fn active_set(&self) -> BTreeSet<NodeId> {
        self.active.iter().map(|&n| NodeId(n)).collect()
    }

    pub fn pi_node(&self) -> NodeId {
        let fallback = self.active.iter().copied().filter(|&n| n != self.client).max().unwrap_or(self.client);
        NodeId(self.pi.unwrap_or(fallback))
    }
}

/// `start` and `end` are round indices; the behaviour applies for
/// `start <= round < end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub node: u32,
    pub behavior: NodeBehavior,
    #[serde(default)]
    pub start: u64,
    #[serde(default = "forever")]
    pub end: u64,
}

fn forever() -> u64 {
    u64::MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    #[serde(default = "one")]
    pub countries: u32,
    #[serde(default = "one")]
    pub sites_per_country: u32,
    #[serde(default = "one")]
    pub patients_per_site: u32,
    #[serde(default = "one")]
    pub readings_per_patient: u32,
    #[serde(default = "one")]
    pub telemetry_per_round: u32,
    /// Chance that a telemetry reading is pushed out of band.
    #[serde(default)]
    pub deviation_rate: f64,
    #[serde(default = "one")]
    pub activity_events_per_round: u32,
    /// When non-zero, each patient also uploads one bulk record of this
    /// size per round.
    #[serde(default)]
    pub bulk_payload_bytes: usize,
    #[serde(default = "default_block_cap")]
    pub max_block_txs: usize,
}

fn one() -> u32 {
    1
}

fn default_block_cap() -> usize {
    512
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            countries: 1,
            sites_per_country: 1,
            patients_per_site: 1,
            readings_per_patient: 1,
            telemetry_per_round: 1,
            deviation_rate: 0.0,
            activity_events_per_round: 1,
            bulk_payload_bytes: 0,
            max_block_txs: default_block_cap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyModel {
    pub min: u64,
    pub max: u64,
    #[serde(default)]
    pub drop_probability: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel { min: 1, max: 3, drop_probability: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub node_count: u32,
    pub channels: Vec<ChannelSpec>,
    #[serde(default)]
    pub group: GroupConfig,
    #[serde(default = "default_difficulty")]
    pub difficulty: u32,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub workload: Workload,
    pub rounds: u64,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default = "default_stage_timeout")]
    pub stage_timeout: u64,
    /// Starting trust per node id; normalized on load. Uniform when absent.
    #[serde(default)]
    pub initial_trust: Option<BTreeMap<u32, f64>>,
}

fn schema() -> u32 {
    SCHEMA_VERSION
}

fn default_difficulty() -> u32 {
    2
}

fn default_stage_timeout() -> u64 {
    10
}

impl ScenarioConfig {
    pub fn nodes(&self) -> BTreeSet<NodeId> {
        (1..=self.node_count).map(NodeId).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("unsupported version {}", self.schema_version)));
        }
        if self.node_count == 0 {
            return Err(invalid("node_count", "must be at least 1"));
        }
        let in_range = |n: u32| (1..=self.node_count).contains(&n);
        if self.channels.is_empty() {
            return Err(invalid("channels", "at least one channel is required"));
        }
        let mut names = BTreeSet::new();
        for (k, ch) in self.channels.iter().enumerate() {
            let field = |f: &str| format!("channels[{k}].{f}");
            if ch.name.is_empty() || !names.insert(ch.name.as_str()) {
                return Err(invalid(field("name"), "names must be non-empty and unique"));
            }
            if ch.active.is_empty() {
                return Err(invalid(field("active"), "no active nodes"));
            }
            if let Some(&bad) = ch.active.iter().find(|&&n| !in_range(n)) {
                return Err(invalid(field("active"), format!("node {bad} outside 1..={}", self.node_count)));
            }
            if ch.active.iter().collect::<BTreeSet<_>>().len() != ch.active.len() {
                return Err(invalid(field("active"), "duplicate node"));
            }
            if !in_range(ch.client) {
                return Err(invalid(field("client"), format!("node {} outside 1..={}", ch.client, self.node_count)));
            }
            if let Some(pi) = ch.pi {
                if !ch.active.contains(&pi) {
                    return Err(invalid(field("pi"), format!("node {pi} is not active on the channel")));
                }
            }
        }
        self.group.validate().map_err(|e| invalid("group", e.to_string()))?;
        if self.difficulty > MAX_DIFFICULTY {
            return Err(invalid("difficulty", format!("at most {MAX_DIFFICULTY}")));
        }
        for (k, f) in self.faults.iter().enumerate() {
            if !in_range(f.node) {
                return Err(invalid(format!("faults[{k}].node"), format!("node {} outside 1..={}", f.node, self.node_count)));
            }
            if f.start > f.end {
                return Err(invalid(format!("faults[{k}]"), "start after end"));
            }
        }
        let l = &self.latency;
        if !(0.0..1.0).contains(&l.drop_probability) {
            return Err(invalid("latency.drop_probability", "must lie in [0, 1)"));
        }
        if l.min > l.max {
            return Err(invalid("latency", "min exceeds max"));
        }
        if !(0.0..=1.0).contains(&self.workload.deviation_rate) {
            return Err(invalid("workload.deviation_rate", "must lie in [0, 1]"));
        }
        if self.workload.max_block_txs == 0 {
            return Err(invalid("workload.max_block_txs", "must be at least 1"));
        }
        if self.stage_timeout == 0 {
            return Err(invalid("stage_timeout", "must be at least 1"));
        }
        if let Some(t) = &self.initial_trust {
            if let Some((&n, _)) = t.iter().find(|(&n, _)| !in_range(n)) {
                return Err(invalid("initial_trust", format!("node {n} outside 1..={}", self.node_count)));
            }
            if t.values().any(|v| !v.is_finite() || *v < 0.0) || t.values().sum::<f64>() <= 0.0 {
                return Err(invalid("initial_trust", "values must be non-negative with a positive sum"));
            }
        }
        Ok(())
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(source: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = serde_json::from_str(source)
        .map_err(|e| ConfigError::ParseError { line: e.line(), message: e.to_string() })?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NINE: &str = include_str!("../../scenarios/paper-9node.scenario");

    #[test]
    fn bundled_nine_node() {
        let cfg = load_scenario(NINE).unwrap();
        assert_eq!(cfg.node_count, 9);
        let pe = cfg.channels.iter().find(|c| c.name == "patient-enrollment").unwrap();
        assert_eq!(pe.active, vec![4, 5, 6]);
        assert_eq!(pe.pi_node(), NodeId(5));
    }

    #[test]
    fn node_out_of_range() {
        let text = NINE.replacen("[4, 5, 6]", "[4, 5, 12]", 1);
        match load_scenario(&text) {
            Err(ConfigError::ValidationError { field, .. }) => assert!(field.starts_with("channels[")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn drop_probability_one() {
        let mut cfg = load_scenario(NINE).unwrap();
        cfg.latency.drop_probability = 1.0;
        assert_eq!(
            cfg.validate(),
            Err(ConfigError::ValidationError {
                field: "latency.drop_probability".into(),
                message: "must lie in [0, 1)".into()
            })
        );
    }

    #[test]
    fn parse_error_has_line() {
        let err = load_scenario("{\n  \"seed\": 1,\n  oops\n}").unwrap_err();
        assert!(matches!(err, ConfigError::ParseError { line: 3, .. }));
    }

    #[test]
    fn unknown_field_rejected() {
        let text = NINE.replacen("\"rounds\"", "\"roundz\": 1, \"rounds\"", 1);
        assert!(matches!(load_scenario(&text), Err(ConfigError::ParseError { .. })));
    }
}
