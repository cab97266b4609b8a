//! The T-PBFT round: group stage inside the primary group, then
//! pre-prepare, prepare, commit and client finalization across the
//! consensus group.

mod message;
mod replica;
mod round;

pub use message::{
    group_fingerprint, node_salt, sender_fingerprint, ConsensusMessage, Dest, Envelope, MessageKind, TraceRecord,
};
pub use replica::{Client, Observation, Replica};
pub use round::{
    check_prepared_quorum, client_finalize, emit_pre_prepare, group_stage_propose, group_stage_verify, on_pre_prepare,
    order_transactions, replace_failed_primary, select_proposer, ConsensusError, Finality, RejectReason, Replacement,
    RoundState, Stage, Verdict,
};
