use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{NodeId, TrustError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxOutcome {
    Satisfactory,
    Unsatisfactory,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub sat: u64,
    pub unsat: u64,
}

impl Counter {
    pub fn total(&self) -> u64 {
        self.sat + self.unsat
    }

    /// `sat - unsat`, the satisfaction score of the pair.
    pub fn score(&self) -> i64 {
        self.sat as i64 - self.unsat as i64
    }
}

/// Per ordered pair `(from, to)` counts of satisfactory and unsatisfactory
/// transactions. A missing pair means the two never transacted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustLedger {
    nodes: BTreeSet<NodeId>,
    counters: BTreeMap<(NodeId, NodeId), Counter>,
}

impl TrustLedger {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        TrustLedger {
            nodes: nodes.into_iter().collect(),
            counters: BTreeMap::new(),
        }
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, id: NodeId) -> Result<(), TrustError> {
        if self.nodes.contains(&id) {
            Ok(())
        } else {
            Err(TrustError::UnknownNode(id))
        }
    }

    pub fn record_transaction(&mut self, from: NodeId, to: NodeId, outcome: TxOutcome) -> Result<(), TrustError> {
        self.check(from)?;
        self.check(to)?;
        if from == to {
            return Err(TrustError::SelfTransaction(from));
        }
        let c = self.counters.entry((from, to)).or_default();
        match outcome {
            TxOutcome::Satisfactory => c.sat += 1,
            TxOutcome::Unsatisfactory => c.unsat += 1,
        }
        Ok(())
    }

    pub fn counter(&self, from: NodeId, to: NodeId) -> Counter {
        self.counters.get(&(from, to)).copied().unwrap_or_default()
    }

    pub fn counters(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &Counter)> {
        self.counters.iter()
    }

    /// Splits the other nodes into those `i` has transacted with and those
    /// it has not.
    pub fn partition_nodes(&self, i: NodeId) -> Result<(BTreeSet<NodeId>, BTreeSet<NodeId>), TrustError> {
        self.check(i)?;
        let tx: BTreeSet<NodeId> = self
            .counters
            .range((i, NodeId(0))..=(i, NodeId(u32::MAX)))
            .filter(|(_, c)| c.total() > 0)
            .map(|(&(_, j), _)| j)
            .collect();
        let non_tx = self
            .nodes
            .iter()
            .copied()
            .filter(|j| *j != i && !tx.contains(j))
            .collect();
        Ok((tx, non_tx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> BTreeSet<NodeId> {
        v.iter().map(|&x| NodeId(x)).collect()
    }

    #[test]
    fn single_increment() {
        let mut l = TrustLedger::new((1..=3).map(NodeId));
        l.record_transaction(NodeId(1), NodeId(2), TxOutcome::Satisfactory).unwrap();
        assert_eq!(l.counter(NodeId(1), NodeId(2)), Counter { sat: 1, unsat: 0 });
        assert_eq!(l.counter(NodeId(2), NodeId(1)), Counter::default());
    }

    #[test]
    fn increments_existing() {
        let mut l = TrustLedger::new((1..=3).map(NodeId));
        for _ in 0..3 {
            l.record_transaction(NodeId(1), NodeId(2), TxOutcome::Satisfactory).unwrap();
        }
        l.record_transaction(NodeId(1), NodeId(2), TxOutcome::Unsatisfactory).unwrap();
        l.record_transaction(NodeId(1), NodeId(2), TxOutcome::Unsatisfactory).unwrap();
        assert_eq!(l.counter(NodeId(1), NodeId(2)), Counter { sat: 3, unsat: 2 });
    }

    #[test]
    fn errors() {
        let mut l = TrustLedger::new((1..=3).map(NodeId));
        assert_eq!(
            l.record_transaction(NodeId(1), NodeId(1), TxOutcome::Satisfactory),
            Err(TrustError::SelfTransaction(NodeId(1)))
        );
        assert_eq!(
            l.record_transaction(NodeId(1), NodeId(9), TxOutcome::Satisfactory),
            Err(TrustError::UnknownNode(NodeId(9)))
        );
        assert_eq!(l.partition_nodes(NodeId(0)), Err(TrustError::UnknownNode(NodeId(0))));
    }

    #[test]
    fn partition_letters_example() {
        // P=1 transacts with Q=2 and R=3 in a nine-node network.
        let mut l = TrustLedger::new((1..=9).map(NodeId));
        l.record_transaction(NodeId(1), NodeId(2), TxOutcome::Satisfactory).unwrap();
        l.record_transaction(NodeId(1), NodeId(3), TxOutcome::Unsatisfactory).unwrap();
        l.record_transaction(NodeId(4), NodeId(1), TxOutcome::Satisfactory).unwrap();
        let (tx, non) = l.partition_nodes(NodeId(1)).unwrap();
        assert_eq!(tx, ids(&[2, 3]));
        assert_eq!(non, ids(&[4, 5, 6, 7, 8, 9]));
    }

    #[test]
    fn partition_empty_history() {
        let l = TrustLedger::new((1..=3).map(NodeId));
        let (tx, non) = l.partition_nodes(NodeId(1)).unwrap();
        assert!(tx.is_empty());
        assert_eq!(non, ids(&[2, 3]));
    }

    #[test]
    fn partition_patient_enrollment() {
        let mut l = TrustLedger::new((1..=9).map(NodeId));
        l.record_transaction(NodeId(6), NodeId(4), TxOutcome::Satisfactory).unwrap();
        l.record_transaction(NodeId(6), NodeId(5), TxOutcome::Satisfactory).unwrap();
        let (tx, non) = l.partition_nodes(NodeId(6)).unwrap();
        assert_eq!(tx, ids(&[4, 5]));
        assert_eq!(non, ids(&[1, 2, 3, 7, 8, 9]));
    }
}
