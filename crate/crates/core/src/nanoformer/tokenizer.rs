// SPDX-License-Identifier: MIT OR Apache-2.0

//! Byte-level tokenizer: byte `b` maps to id `b + 4`; ids 0..4 are reserved.

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const SEP: u32 = 3;
pub const NUM_SPECIAL: u32 = 4;
/// Vocabulary size covering all bytes plus the reserved ids.
pub const BYTE_VOCAB: usize = 256 + NUM_SPECIAL as usize;

#[derive(Debug, Clone, Copy, Default)]
pub struct Tokenizer;

impl Tokenizer {
    pub fn encode(&self, bytes: impl AsRef<[u8]>) -> Vec<u32> {
        bytes.as_ref().iter().map(|&b| Self::byte_id(b)).collect()
    }

    /// Bytes for every non-reserved id; reserved ids are dropped.
    pub fn decode(&self, ids: &[u32]) -> Vec<u8> {
        ids.iter().filter_map(|&id| Self::id_byte(id)).collect()
    }

    pub fn decode_lossy(&self, ids: &[u32]) -> String {
        String::from_utf8_lossy(&self.decode(ids)).into_owned()
    }

    pub fn byte_id(b: u8) -> u32 {
        u32::from(b) + NUM_SPECIAL
    }

    pub fn id_byte(id: u32) -> Option<u8> {
        id.checked_sub(NUM_SPECIAL).and_then(|b| u8::try_from(b).ok())
    }

    /// `BOS prompt SEP response`, returning the ids and the index of the
    /// first response position.
    pub fn encode_pair(&self, prompt: &str, response: &str) -> (Vec<u32>, usize) {
        let mut ids = Vec::with_capacity(prompt.len() + response.len() + 2);
        ids.push(BOS);
        ids.extend(self.encode(prompt));
        ids.push(SEP);
        let start = ids.len();
        ids.extend(self.encode(response));
        (ids, start)
    }
}
