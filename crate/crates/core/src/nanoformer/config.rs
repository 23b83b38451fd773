// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nanoformer::tokenizer::NUM_SPECIAL;

/// Shape and seed of a [`NanoModel`](super::NanoModel).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub vocab: usize,
    pub max_seq: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// The desk configuration: L=4, d=32, 4 heads, byte vocabulary, 256 positions.
    fn default() -> Self {
        Self { layers: 4, d_model: 32, heads: 4, vocab: 260, max_seq: 256, seed: 0 }
    }
}

impl ModelConfig {
    /// FFN hidden width is fixed at four times the model width.
    pub fn ffn_width(&self) -> usize {
        4 * self.d_model
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("layer count must be at least 1".into()));
        }
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("width {} not divisible into {} heads", self.d_model, self.heads)));
        }
        if self.vocab < NUM_SPECIAL as usize {
            return Err(Error::Config(format!("vocab {} smaller than the {NUM_SPECIAL} reserved ids", self.vocab)));
        }
        if self.max_seq == 0 {
            return Err(Error::Config("max_seq must be positive".into()));
        }
        Ok(())
    }
}
