use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ledger::TrustLedger;
use super::{NodeId, TrustError};

/// Normalized direct trust from one node towards the nodes it transacted
/// with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectTrust {
    pub values: BTreeMap<NodeId, f64>,
    /// True when the positive satisfaction total was zero and every value
    /// is `1/N`.
    pub fallback: bool,
}

impl TrustLedger {
    /// `S_ij = sat - unsat` per transacting neighbour, `C_ij = max(S_ij, 0)`
    /// over the sum of positive scores, or `1/N` for each neighbour when that
    /// sum is zero.
    pub fn direct_trust(&self, i: NodeId) -> Result<DirectTrust, TrustError> {
        let (tx_nodes, _) = self.partition_nodes(i)?;
        let scores: Vec<(NodeId, i64)> = tx_nodes.iter().map(|&j| (j, self.counter(i, j).score())).collect();
        let total: i64 = scores.iter().map(|(_, s)| (*s).max(0)).sum();
        if total == 0 {
            let uniform = 1.0 / self.len() as f64;
            return Ok(DirectTrust {
                values: scores.into_iter().map(|(j, _)| (j, uniform)).collect(),
                fallback: true,
            });
        }
        let total = total as f64;
        Ok(DirectTrust {
            values: scores
                .into_iter()
                .map(|(j, s)| (j, s.max(0) as f64 / total))
                .collect(),
            fallback: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Direct,
    Recommended,
    UniformFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalEntry {
    pub value: f64,
    pub provenance: Provenance,
}

/// Transitive trust for a non-transacting pair. `hops` is `None` when no
/// transaction path exists, in which case `value` is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recommendation {
    pub value: f64,
    pub hops: Option<usize>,
}

impl Recommendation {
    pub fn is_no_path(&self) -> bool {
        self.hops.is_none()
    }
}

/// Sparse matrix of local trust values `C_ij`; absent entries are zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalTrustMatrix {
    nodes: Vec<NodeId>,
    entries: BTreeMap<(NodeId, NodeId), LocalEntry>,
}

impl LocalTrustMatrix {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let set: BTreeSet<NodeId> = nodes.into_iter().collect();
        LocalTrustMatrix {
            nodes: set.into_iter().collect(),
            entries: BTreeMap::new(),
        }
    }

    /// Dense constructor, rows and columns in the order of `nodes`. Every
    /// non-zero cell becomes a `Direct` entry.
    pub fn from_dense(nodes: &[NodeId], rows: &[Vec<f64>]) -> Self {
        let mut m = LocalTrustMatrix::new(nodes.iter().copied());
        for (r, &i) in nodes.iter().enumerate() {
            for (c, &j) in nodes.iter().enumerate() {
                let v = rows[r][c];
                if v != 0.0 {
                    m.set(i, j, v, Provenance::Direct);
                }
            }
        }
        m
    }

    /// Direct entries only, one row per node with positive history.
    pub fn direct_layer(ledger: &TrustLedger) -> Self {
        let mut m = LocalTrustMatrix::new(ledger.nodes().iter().copied());
        for &i in ledger.nodes() {
            let d = ledger.direct_trust(i).expect("node from ledger");
            let provenance = if d.fallback { Provenance::UniformFallback } else { Provenance::Direct };
            for (j, v) in d.values {
                m.set(i, j, v, provenance);
            }
        }
        m
    }

    /// Full local trust: direct entries, recommended entries for every
    /// reachable non-transacting pair, and a uniform `1/N` row for nodes
    /// whose positive satisfaction total is zero.
    pub fn from_ledger(ledger: &TrustLedger) -> Self {
        let mut m = Self::direct_layer(ledger);
        let n = m.nodes.len();
        if n == 0 {
            return m;
        }
        let uniform = 1.0 / n as f64;
        let nodes = m.nodes.clone();
        let mut extra = Vec::new();
        for &i in &nodes {
            if m.row_is_fallback(i) {
                for &j in &nodes {
                    extra.push((i, j, uniform, Provenance::UniformFallback));
                }
                continue;
            }
            for (j, rec) in m.recommend_from(i) {
                extra.push((i, j, rec.value, Provenance::Recommended));
            }
        }
        for (i, j, v, p) in extra {
            m.set(i, j, v, p);
        }
        m
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn set(&mut self, i: NodeId, j: NodeId, value: f64, provenance: Provenance) {
        self.entries.insert((i, j), LocalEntry { value, provenance });
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        self.entries.get(&(i, j)).map_or(0.0, |e| e.value)
    }

    pub fn entry(&self, i: NodeId, j: NodeId) -> Option<LocalEntry> {
        self.entries.get(&(i, j)).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &LocalEntry)> {
        self.entries.iter()
    }

    pub fn row(&self, i: NodeId) -> impl Iterator<Item = (NodeId, LocalEntry)> + '_ {
        self.entries
            .range((i, NodeId(0))..=(i, NodeId(u32::MAX)))
            .map(|(&(_, j), &e)| (j, e))
    }

    fn row_is_fallback(&self, i: NodeId) -> bool {
        !self.row(i).any(|(_, e)| e.provenance == Provenance::Direct)
    }

    fn direct_edges(&self, k: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.row(k)
            .filter(|(_, e)| e.provenance == Provenance::Direct)
            .map(|(j, e)| (j, e.value))
    }

    /// Breadth-first composition over direct-trust edges. Each node first
    /// reached at hop `h` gets the sum of products along all length-`h`
    /// paths, clamped to 1.
    fn recommend_from(&self, i: NodeId) -> BTreeMap<NodeId, Recommendation> {
        let max_hops = self.nodes.len().saturating_sub(1);
        let mut visited: BTreeSet<NodeId> = BTreeSet::from([i]);
        let mut frontier: BTreeMap<NodeId, f64> = self.direct_edges(i).collect();
        visited.extend(frontier.keys().copied());
        let mut out = BTreeMap::new();
        let mut hop = 1;
        while !frontier.is_empty() && hop < max_hops {
            hop += 1;
            let mut next: BTreeMap<NodeId, f64> = BTreeMap::new();
            for (&k, &w) in &frontier {
                for (j, c) in self.direct_edges(k) {
                    if !visited.contains(&j) {
                        *next.entry(j).or_insert(0.0) += w * c;
                    }
                }
            }
            for (&j, &v) in &next {
                visited.insert(j);
                out.insert(j, Recommendation { value: v.min(1.0), hops: Some(hop) });
            }
            frontier = next;
        }
        out
    }

    /// Recommended trust `C_ij = sum_k C_ik * C_kj`, composed hop by hop when
    /// no single intermediary links the pair.
    pub fn recommended_trust(&self, i: NodeId, j: NodeId) -> Result<Recommendation, TrustError> {
        for id in [i, j] {
            if self.nodes.binary_search(&id).is_err() {
                return Err(TrustError::UnknownNode(id));
            }
        }
        if i == j || self.entry(i, j).is_some_and(|e| e.provenance == Provenance::Direct) {
            return Err(TrustError::DirectPair(i, j));
        }
        Ok(self
            .recommend_from(i)
            .remove(&j)
            .unwrap_or(Recommendation { value: 0.0, hops: None }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trust::TxOutcome::{Satisfactory as S, Unsatisfactory as U};

    fn n(x: u32) -> NodeId {
        NodeId(x)
    }

    fn ledger_with(n_nodes: u32, rows: &[(u32, u32, u64, u64)]) -> TrustLedger {
        let mut l = TrustLedger::new((1..=n_nodes).map(NodeId));
        for &(i, j, sat, unsat) in rows {
            for _ in 0..sat {
                l.record_transaction(n(i), n(j), S).unwrap();
            }
            for _ in 0..unsat {
                l.record_transaction(n(i), n(j), U).unwrap();
            }
        }
        l
    }

    #[test]
    fn direct_positive_and_negative() {
        // Q=2 with (3,1), R=3 with (1,2): S=2 and -1, total 2.
        let l = ledger_with(9, &[(1, 2, 3, 1), (1, 3, 1, 2)]);
        let d = l.direct_trust(n(1)).unwrap();
        assert!(!d.fallback);
        assert_eq!(d.values[&n(2)], 1.0);
        assert_eq!(d.values[&n(3)], 0.0);
    }

    #[test]
    fn direct_zero_total_falls_back_to_uniform() {
        let l = ledger_with(4, &[(1, 2, 2, 2), (1, 3, 1, 1)]);
        let d = l.direct_trust(n(1)).unwrap();
        assert!(d.fallback);
        assert_eq!(d.values[&n(2)], 0.25);
        assert_eq!(d.values[&n(3)], 0.25);
    }

    #[test]
    fn direct_equal_scores_split() {
        let l = ledger_with(5, &[(1, 2, 4, 0), (1, 3, 4, 0)]);
        let d = l.direct_trust(n(1)).unwrap();
        assert_eq!(d.values[&n(2)], 0.5);
        assert_eq!(d.values[&n(3)], 0.5);
    }

    #[test]
    fn recommended_one_hop() {
        // P=1, Q=2, R=3, S=4.
        let mut m = LocalTrustMatrix::new((1..=4).map(NodeId));
        m.set(n(1), n(2), 0.6, Provenance::Direct);
        m.set(n(1), n(3), 0.4, Provenance::Direct);
        m.set(n(2), n(4), 0.5, Provenance::Direct);
        m.set(n(3), n(4), 0.25, Provenance::Direct);
        let r = m.recommended_trust(n(1), n(4)).unwrap();
        assert!((r.value - 0.40).abs() < 1e-15);
        assert_eq!(r.hops, Some(2));
    }

    #[test]
    fn recommended_identity_path() {
        let mut m = LocalTrustMatrix::new((1..=3).map(NodeId));
        m.set(n(1), n(2), 1.0, Provenance::Direct);
        m.set(n(2), n(3), 1.0, Provenance::Direct);
        assert_eq!(m.recommended_trust(n(1), n(3)).unwrap().value, 1.0);
    }

    #[test]
    fn recommended_no_path() {
        let mut m = LocalTrustMatrix::new((1..=4).map(NodeId));
        m.set(n(1), n(2), 1.0, Provenance::Direct);
        m.set(n(3), n(4), 1.0, Provenance::Direct);
        let r = m.recommended_trust(n(1), n(4)).unwrap();
        assert!(r.is_no_path());
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn recommended_multi_hop_and_clamp() {
        // 1 -> 2 -> 3 -> 4 at three hops.
        let mut m = LocalTrustMatrix::new((1..=4).map(NodeId));
        m.set(n(1), n(2), 0.5, Provenance::Direct);
        m.set(n(2), n(3), 0.5, Provenance::Direct);
        m.set(n(3), n(4), 0.5, Provenance::Direct);
        let r = m.recommended_trust(n(1), n(4)).unwrap();
        assert_eq!(r.hops, Some(3));
        assert!((r.value - 0.125).abs() < 1e-15);

        // Two parallel paths whose products sum past 1.
        let mut m = LocalTrustMatrix::new((1..=4).map(NodeId));
        m.set(n(1), n(2), 1.0, Provenance::Direct);
        m.set(n(1), n(3), 1.0, Provenance::Direct);
        m.set(n(2), n(4), 1.0, Provenance::Direct);
        m.set(n(3), n(4), 1.0, Provenance::Direct);
        assert_eq!(m.recommended_trust(n(1), n(4)).unwrap().value, 1.0);
    }

    #[test]
    fn recommended_rejects_direct_pair() {
        let mut m = LocalTrustMatrix::new((1..=2).map(NodeId));
        m.set(n(1), n(2), 1.0, Provenance::Direct);
        assert_eq!(m.recommended_trust(n(1), n(2)), Err(TrustError::DirectPair(n(1), n(2))));
        assert_eq!(m.recommended_trust(n(1), n(7)), Err(TrustError::UnknownNode(n(7))));
    }

    #[test]
    fn full_matrix_provenance() {
        // 1 trusts 2, 2 trusts 3; 3 has no history.
        let l = ledger_with(3, &[(1, 2, 2, 0), (2, 3, 1, 0)]);
        let m = LocalTrustMatrix::from_ledger(&l);
        assert_eq!(m.entry(n(1), n(2)).unwrap().provenance, Provenance::Direct);
        assert_eq!(m.entry(n(1), n(3)).unwrap().provenance, Provenance::Recommended);
        assert_eq!(m.get(n(1), n(3)), 1.0);
        for j in 1..=3 {
            let e = m.entry(n(3), n(j)).unwrap();
            assert_eq!(e.provenance, Provenance::UniformFallback);
            assert_eq!(e.value, 1.0 / 3.0);
        }
    }
}
