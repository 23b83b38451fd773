// SPDX-License-Identifier: MIT OR Apache-2.0

//! SHA-256 helpers for content digests in reports and manifests.

use sha2::{Digest, Sha256};

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Incremental digest over length-prefixed parts, so `["ab","c"]` and
/// `["a","bc"]` hash differently.
#[derive(Default, Clone)]
pub struct PartsDigest(Sha256);

impl PartsDigest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(mut self, part: impl AsRef<[u8]>) -> Self {
        let part = part.as_ref();
        self.0.update((part.len() as u64).to_le_bytes());
        self.0.update(part);
        self
    }

    pub fn str(self, s: &str) -> Self {
        self.bytes(s.as_bytes())
    }

    pub fn f64s(self, xs: &[f64]) -> Self {
        let raw: Vec<u8> = xs.iter().flat_map(|x| x.to_le_bytes()).collect();
        self.bytes(raw)
    }

    pub fn f32s(self, xs: &[f32]) -> Self {
        let raw: Vec<u8> = xs.iter().flat_map(|x| x.to_le_bytes()).collect();
        self.bytes(raw)
    }

    pub fn u32s(self, xs: &[u32]) -> Self {
        let raw: Vec<u8> = xs.iter().flat_map(|x| x.to_le_bytes()).collect();
        self.bytes(raw)
    }

    pub fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}
