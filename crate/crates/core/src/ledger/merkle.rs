//! Binary Merkle trees over SHA-256 leaf digests.
//!
//! A parent is `SHA256(left || right)`. When a level has an odd number of
//! nodes the last one is paired with itself. A single leaf is its own root.

use super::hash::{sha256_parts, Digest};
use super::LedgerError;

fn parent(left: &Digest, right: &Digest) -> Digest {
    sha256_parts(&[left.as_bytes(), right.as_bytes()])
}

fn next_level(level: &[Digest]) -> Vec<Digest> {
    level
        .chunks(2)
        .map(|pair| match pair {
            [l, r] => parent(l, r),
            [only] => parent(only, only),
            _ => unreachable!(),
        })
        .collect()
}

pub fn merkle_root(leaves: &[Digest]) -> Result<Digest, LedgerError> {
    if leaves.is_empty() {
        return Err(LedgerError::EmptyLeaves);
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = next_level(&level);
    }
    Ok(level[0])
}

/// A fully materialized tree, leaves first, root last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleTree {
    levels: Vec<Vec<Digest>>,
}

impl MerkleTree {
    pub fn build(leaves: Vec<Digest>) -> Result<Self, LedgerError> {
        if leaves.is_empty() {
            return Err(LedgerError::EmptyLeaves);
        }
        let mut levels = vec![leaves];
        while levels.last().map(Vec::len) != Some(1) {
            let next = next_level(levels.last().expect("non-empty"));
            levels.push(next);
        }
        Ok(MerkleTree { levels })
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.levels[0]
    }

    pub fn levels(&self) -> &[Vec<Digest>] {
        &self.levels
    }

    pub fn root(&self) -> Digest {
        self.levels.last().expect("non-empty")[0]
    }
}
