use std::collections::BTreeMap;

use crate::ledger::{sha256, Digest};

use super::GatewayError;

/// Key-value store keyed by the SHA-256 of the value. Every read rechecks
/// the digest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContentStore {
    entries: BTreeMap<Digest, Vec<u8>>,
}

impl ContentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, bytes: &[u8]) -> Digest {
        let d = sha256(bytes);
        self.entries.entry(d).or_insert_with(|| bytes.to_vec());
        d
    }

    pub fn get(&self, digest: &Digest) -> Result<&[u8], GatewayError> {
        let bytes = self.entries.get(digest).ok_or(GatewayError::NotFound(*digest))?;
        if sha256(bytes) != *digest {
            return Err(GatewayError::StoreCorruption(*digest));
        }
        Ok(bytes)
    }

    pub fn contains(&self, digest: &Digest) -> bool {
        self.entries.contains_key(digest)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn digests(&self) -> impl Iterator<Item = &Digest> {
        self.entries.keys()
    }

    pub fn total_bytes(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    /// Out-of-band corruption for fault injection: overwrites the stored
    /// bytes without changing the key.
    pub fn corrupt(&mut self, digest: &Digest, bytes: Vec<u8>) -> bool {
        match self.entries.get_mut(digest) {
            Some(slot) => {
                *slot = bytes;
                true
            }
            None => false,
        }
    }
}
