//! Deterministic discrete-event simulation of T-PBFT over the channel
//! ledger, with fault injection, a trial workload, and metrics.

mod config;
mod engine;
mod faults;
mod metrics;
mod network;
mod workload;

pub use config::{
    load_scenario, ChannelRole, ChannelSpec, ConfigError, FaultSpec, LatencyModel, ScenarioConfig, Workload,
    SCHEMA_VERSION,
};
pub use engine::{baseline_pbft_mode, run, ChannelState, SimError, Simulation, TrustRow};
pub use faults::{apply_behavior, equivocation_hash, tamper_in_transit, FaultPlan, NodeBehavior};
pub use metrics::{GroupSnapshot, Metrics, Mode, RoundRecord, SafetyEvent, TamperDetection, TrustSnapshot};
pub use network::{sample_link, subsystem_rng, Event, EventQueue, LinkKey, TIMER_SENDER};
pub use workload::{out_of_band, InjectedDeviation, WorkloadGen, HUMIDITY_BAND, INLINE_LIMIT, TEMPERATURE_BAND};
