//! Zero-trust admission: device registry, content-addressed store, and
//! the PEP/PDP/PE/TE request path.

mod policy;
mod registry;
mod store;

use thiserror::Error;

use crate::ledger::Digest;

pub use policy::{
    decision_hash_in, policy_digest, request_for, DecisionOutcome, Forwarded, Gateway, LedgerRecord, Policy,
    PolicyDecision, PolicyPattern, PolicyRequest, SessionToken, DECISION_MAGIC, POLICY_MAGIC, REGISTRATION_MAGIC,
    SESSION_TTL,
};
pub use registry::{AttributeSet, DeviceRegistration, Enrollment, Registry, TrustLevels, Wallet, WdType};
pub use store::ContentStore;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("no entry for {0}")]
    NotFound(Digest),
    #[error("stored bytes under {0} no longer hash to their key")]
    StoreCorruption(Digest),
    #[error("patient {0} is not enrolled")]
    UnknownPatient(String),
    #[error("device {1} of patient {0} is already registered")]
    DuplicateDevice(String, String),
    #[error("wallet {0} is not registered")]
    UnregisteredDevice(Digest),
    #[error("request {0} has an incomplete attribute set")]
    MalformedAttributes(u64),
}
