//! Reputation from transaction history.
//!
//! Nodes record satisfactory and unsatisfactory interactions with each
//! other in a [`TrustLedger`]. From those counters we derive normalized
//! direct trust, transitive (recommended) trust for pairs that never
//! interacted, and finally a network-wide [`TrustVector`] as the principal
//! eigenvector of the local trust matrix.

mod global;
mod ledger;
mod local;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use global::{global_trust, InitialTrust, TrustVector, CONVERGENCE_TOLERANCE, LINEAR_SWEEPS, MAX_SWEEPS};
pub use ledger::{Counter, TrustLedger, TxOutcome};
pub use local::{DirectTrust, LocalEntry, LocalTrustMatrix, Provenance, Recommendation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node-{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrustError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("{0} cannot transact with itself")]
    SelfTransaction(NodeId),
    #[error("{0} and {1} have transacted directly; recommended trust applies only to non-transacting pairs")]
    DirectPair(NodeId, NodeId),
    #[error("trust matrix has no nodes")]
    EmptyMatrix,
}

/// Recomputes the full trust picture for one epoch: local matrix from the
/// ledger, then global trust seeded from the previous epoch when given.
pub fn recompute(ledger: &TrustLedger, previous: Option<&TrustVector>) -> Result<TrustVector, TrustError> {
    let matrix = LocalTrustMatrix::from_ledger(ledger);
    let initial = match previous {
        Some(prev) => InitialTrust::From(prev),
        None => InitialTrust::Uniform,
    };
    global_trust(&matrix, initial)
}
