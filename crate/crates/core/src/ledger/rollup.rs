//! Hierarchical digests: patient data signatures roll up through the
//! principal investigator, country, and CRO levels into one sponsor digest.

use serde::{Deserialize, Serialize};

use super::hash::Digest;
use super::merkle::merkle_root;
use super::LedgerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RollupLevel {
    Patient,
    PI,
    Country,
    CRO,
    Sponsor,
}

impl RollupLevel {
    pub fn parent(self) -> Option<RollupLevel> {
        match self {
            RollupLevel::Patient => Some(RollupLevel::PI),
            RollupLevel::PI => Some(RollupLevel::Country),
            RollupLevel::Country => Some(RollupLevel::CRO),
            RollupLevel::CRO => Some(RollupLevel::Sponsor),
            RollupLevel::Sponsor => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollupSignature {
    pub level: RollupLevel,
    pub digest: Digest,
    pub children: Vec<Digest>,
}

impl RollupSignature {
    /// A patient's signature: the Merkle root over its data digests.
    pub fn patient(data_digests: &[Digest]) -> Result<Self, LedgerError> {
        Ok(RollupSignature {
            level: RollupLevel::Patient,
            digest: merkle_root(data_digests)?,
            children: data_digests.to_vec(),
        })
    }
}

/// Combines same-level signatures into their parent level's signature.
pub fn rollup(children: &[RollupSignature]) -> Result<RollupSignature, LedgerError> {
    let first = children.first().ok_or(LedgerError::EmptyLeaves)?;
    if children.iter().any(|c| c.level != first.level) {
        return Err(LedgerError::MixedRollupLevels);
    }
    let level = first.level.parent().ok_or(LedgerError::MixedRollupLevels)?;
    let digests: Vec<Digest> = children.iter().map(|c| c.digest).collect();
    Ok(RollupSignature {
        level,
        digest: merkle_root(&digests)?,
        children: digests,
    })
}

/// Nested input for a full roll-up: CROs of countries of sites (PIs) of
/// patients, each patient given as its data digests.
pub type Hierarchy = Vec<Vec<Vec<Vec<Vec<Digest>>>>>;

/// Rolls a whole hierarchy up to the sponsor signature.
pub fn sponsor_signature(hierarchy: &Hierarchy) -> Result<RollupSignature, LedgerError> {
    let cros = hierarchy
        .iter()
        .map(|countries| {
            let countries = countries
                .iter()
                .map(|sites| {
                    let pis = sites
                        .iter()
                        .map(|patients| {
                            let patients = patients
                                .iter()
                                .map(|d| RollupSignature::patient(d))
                                .collect::<Result<Vec<_>, _>>()?;
                            rollup(&patients)
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    rollup(&pis)
                })
                .collect::<Result<Vec<_>, _>>()?;
            rollup(&countries)
        })
        .collect::<Result<Vec<_>, _>>()?;
    rollup(&cros)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::hash::sha256;

    fn d(s: &str) -> Digest {
        sha256(s.as_bytes())
    }

    fn sig(level: RollupLevel, s: &str) -> RollupSignature {
        RollupSignature { level, digest: d(s), children: vec![] }
    }

    #[test]
    fn three_pis_into_country() {
        let pis = [sig(RollupLevel::PI, "hj"), sig(RollupLevel::PI, "rk"), sig(RollupLevel::PI, "sm")];
        let country = rollup(&pis).unwrap();
        assert_eq!(country.level, RollupLevel::Country);
        assert_eq!(country.digest, merkle_root(&[d("hj"), d("rk"), d("sm")]).unwrap());
    }

    #[test]
    fn single_cro_sponsor_is_cro_digest() {
        let cro = sig(RollupLevel::CRO, "cro-1");
        let sponsor = rollup(std::slice::from_ref(&cro)).unwrap();
        assert_eq!(sponsor.level, RollupLevel::Sponsor);
        assert_eq!(sponsor.digest, cro.digest);
    }

    #[test]
    fn errors() {
        assert_eq!(rollup(&[]), Err(LedgerError::EmptyLeaves));
        assert_eq!(
            rollup(&[sig(RollupLevel::PI, "a"), sig(RollupLevel::Country, "b")]),
            Err(LedgerError::MixedRollupLevels)
        );
        assert_eq!(rollup(&[sig(RollupLevel::Sponsor, "a")]), Err(LedgerError::MixedRollupLevels));
    }

    #[test]
    fn one_patient_change_reaches_sponsor() {
        let mk = |tweak: bool| -> Hierarchy {
            (0..2)
                .map(|c| {
                    (0..2)
                        .map(|k| {
                            (0..3)
                                .map(|s| {
                                    (0..3)
                                        .map(|p| {
                                            let label = format!("C{c}{k}S{s}P{p}");
                                            let mut v = vec![d(&label), d(&(label.clone() + "x"))];
                                            if tweak && c == 1 && k == 0 && s == 2 && p == 1 {
                                                v[1].0[31] ^= 1;
                                            }
                                            v
                                        })
                                        .collect()
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        };
        let a = sponsor_signature(&mk(false)).unwrap();
        let b = sponsor_signature(&mk(true)).unwrap();
        assert_eq!(a.level, RollupLevel::Sponsor);
        assert_ne!(a.digest, b.digest);
        assert_eq!(a.digest, sponsor_signature(&mk(false)).unwrap().digest);
    }
}
