//! Content hashing for manifests, stage stamps and config fingerprints.

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Incremental hasher over several byte chunks, each length-prefixed so that
/// chunk boundaries are part of the digest.
#[derive(Default)]
pub struct ChunkHasher(Sha256);

impl ChunkHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn chunk(&mut self, bytes: &[u8]) -> &mut Self {
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
        self
    }

    pub fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}
