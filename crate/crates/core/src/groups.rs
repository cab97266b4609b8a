//! Trust-ranked consensus and primary groups.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trust::{NodeId, TrustVector};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("no trust value for {0}")]
    MissingTrust(NodeId),
    #[error("cannot build a group from an empty node set")]
    NoNodes,
    #[error("group fraction {0} must lie in (0, 1]")]
    BadFraction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    /// Fraction of nodes admitted to the consensus group.
    pub s: f64,
    /// Fraction of the consensus group admitted to the primary group.
    pub m: f64,
}

impl GroupConfig {
    pub fn new(s: f64, m: f64) -> Result<Self, GroupError> {
        let cfg = GroupConfig { s, m };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GroupError> {
        for v in [self.s, self.m] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(GroupError::BadFraction(v.to_string()));
            }
        }
        Ok(())
    }
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig { s: 1.0, m: 0.25 }
    }
}

/// `max(1, ceil(fraction * n))`, never more than `n`.
pub fn group_size(fraction: f64, n: usize) -> usize {
    // Guard against 0.3 * 10 = 3.0000000000000004 rounding up to 4.
    let raw = fraction * n as f64;
    let snapped = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw.ceil() };
    (snapped as usize).clamp(1, n.max(1))
}

/// Tolerated Byzantine members for a group of `size`.
pub fn max_faulty(size: usize) -> usize {
    size.saturating_sub(1) / 3
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusGroup {
    /// Descending trust, ties by ascending id.
    pub members: Vec<NodeId>,
    pub f: usize,
}

impl ConsensusGroup {
    pub fn contains(&self, id: NodeId) -> bool {
        self.members.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Prepare quorum: strictly more than `2f` votes.
    pub fn prepare_quorum(&self) -> usize {
        2 * self.f + 1
    }

    /// Matching replies the client needs.
    pub fn reply_quorum(&self) -> usize {
        self.f + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimaryGroup {
    pub members: Vec<NodeId>,
}

impl PrimaryGroup {
    pub fn contains(&self, id: NodeId) -> bool {
        self.members.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn rank(trust: &TrustVector, nodes: impl IntoIterator<Item = NodeId>) -> Result<Vec<NodeId>, GroupError> {
    let mut scored = nodes
        .into_iter()
        .map(|id| trust.get(id).map(|t| (id, t)).ok_or(GroupError::MissingTrust(id)))
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().map(|(id, _)| id).collect())
}

pub fn build_consensus_group(
    trust: &TrustVector,
    config: &GroupConfig,
    nodes: &BTreeSet<NodeId>,
) -> Result<ConsensusGroup, GroupError> {
    if nodes.is_empty() {
        return Err(GroupError::NoNodes);
    }
    let mut members = rank(trust, nodes.iter().copied())?;
    members.truncate(group_size(config.s, nodes.len()));
    let f = max_faulty(members.len());
    Ok(ConsensusGroup { members, f })
}

pub fn build_primary_group(
    cg: &ConsensusGroup,
    trust: &TrustVector,
    config: &GroupConfig,
) -> Result<PrimaryGroup, GroupError> {
    if cg.is_empty() {
        return Err(GroupError::NoNodes);
    }
    let mut members = rank(trust, cg.members.iter().copied())?;
    members.truncate(group_size(config.m, cg.len()));
    Ok(PrimaryGroup { members })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(n: u32) -> BTreeSet<NodeId> {
        (1..=n).map(NodeId).collect()
    }

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&x| NodeId(x)).collect()
    }

    #[test]
    fn nine_uniform_full() {
        let t = TrustVector::uniform(set(9));
        let cg = build_consensus_group(&t, &GroupConfig { s: 1.0, m: 0.25 }, &set(9)).unwrap();
        assert_eq!(cg.members, ids(&[1, 2, 3, 4, 5, 6, 7, 8, 9]));
        assert_eq!(cg.f, 2);
    }

    #[test]
    fn five_nodes_excludes_lowest() {
        let t = TrustVector::from_values(
            [0.3, 0.25, 0.2, 0.15, 0.1].iter().enumerate().map(|(k, &v)| (NodeId(k as u32 + 1), v)),
        );
        let cfg = GroupConfig { s: 0.8, m: 0.25 };
        let cg = build_consensus_group(&t, &cfg, &set(5)).unwrap();
        assert_eq!(cg.members, ids(&[1, 2, 3, 4]));
        assert_eq!(cg.f, 1);
        let pg = build_primary_group(&cg, &t, &cfg).unwrap();
        assert_eq!(pg.members, ids(&[1]));
        let full = build_primary_group(&cg, &t, &GroupConfig { s: 0.8, m: 1.0 }).unwrap();
        assert_eq!(full.members, cg.members);
    }

    #[test]
    fn tie_break_by_id() {
        let t = TrustVector::uniform(set(10));
        let cg = build_consensus_group(&t, &GroupConfig { s: 0.3, m: 1.0 }, &set(10)).unwrap();
        assert_eq!(cg.members, ids(&[1, 2, 3]));
        assert_eq!(cg.f, 0);
    }

    #[test]
    fn singleton_primary() {
        let t = TrustVector::uniform(set(3));
        let cg = ConsensusGroup { members: ids(&[2]), f: 0 };
        for m in [0.01, 0.5, 1.0] {
            let pg = build_primary_group(&cg, &t, &GroupConfig { s: 1.0, m }).unwrap();
            assert_eq!(pg.members, ids(&[2]));
        }
    }

    #[test]
    fn missing_trust() {
        let t = TrustVector::uniform(set(3));
        assert_eq!(
            build_consensus_group(&t, &GroupConfig::default(), &set(4)),
            Err(GroupError::MissingTrust(NodeId(4)))
        );
    }

    #[test]
    fn bad_fraction() {
        assert!(GroupConfig::new(0.0, 0.5).is_err());
        assert!(GroupConfig::new(1.0, 1.5).is_err());
        assert!(GroupConfig::new(1.0, 1.0).is_ok());
    }

    proptest! {
        #[test]
        fn size_law(n in 1usize..=1000, s_milli in 1u32..=1000) {
            let s = s_milli as f64 / 1000.0;
            let exact = ((s_milli as usize) * n).div_ceil(1000).max(1);
            prop_assert_eq!(group_size(s, n), exact);
        }

        #[test]
        fn nesting_and_rank(values in prop::collection::vec(0u32..5, 1..30), s in 0.01f64..=1.0, m in 0.01f64..=1.0) {
            let nodes: BTreeSet<NodeId> = (1..=values.len() as u32).map(NodeId).collect();
            let t = TrustVector::from_values(nodes.iter().zip(&values).map(|(&id, &v)| (id, v as f64 / 10.0)));
            let cfg = GroupConfig { s, m };
            let cg = build_consensus_group(&t, &cfg, &nodes).unwrap();
            let pg = build_primary_group(&cg, &t, &cfg).unwrap();
            prop_assert!(pg.members.iter().all(|id| cg.contains(*id)));
            prop_assert_eq!(cg.f, (cg.len() - 1) / 3);
            let min_in = cg.members.iter().map(|&id| t.get(id).unwrap()).fold(f64::INFINITY, f64::min);
            for id in nodes.iter().filter(|id| !cg.contains(**id)) {
                prop_assert!(t.get(*id).unwrap() <= min_in);
            }
            prop_assert_eq!(build_consensus_group(&t, &cfg, &nodes).unwrap(), cg);
        }
    }
}
