// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::error::{Error, Result};
use crate::nanoformer::model::NanoModel;
use crate::numkit::Mat;

/// Anything that maps a token sequence to next-token logits at every position.
pub trait LanguageModel {
    fn vocab_size(&self) -> usize;
    /// `T × V` logits; row `t` scores the token at position `t + 1`.
    fn logits(&self, tokens: &[u32]) -> Result<Mat>;
}

impl LanguageModel for NanoModel {
    fn vocab_size(&self) -> usize {
        self.vocab()
    }

    fn logits(&self, tokens: &[u32]) -> Result<Mat> {
        Ok(self.forward_with_taps(tokens)?.logits)
    }
}

/// Log-softmax of one logit row, in `f64`.
pub fn log_softmax(row: &[f32]) -> Vec<f64> {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(f64::from(x)));
    let sum: f64 = row.iter().map(|&x| (f64::from(x) - max).exp()).sum();
    let log_z = max + sum.ln();
    row.iter().map(|&x| f64::from(x) - log_z).collect()
}

/// `exp(-(1/N) Σ log P(y_i | y_<i))` over positions `2..=T`, in `f64`.
pub fn perplexity(model: &impl LanguageModel, tokens: &[u32]) -> Result<f64> {
    if tokens.len() < 2 {
        return Err(Error::Input(format!("perplexity needs at least two tokens, got {}", tokens.len())));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= model.vocab_size()) {
        return Err(Error::Input(format!("token id {bad} outside vocab {}", model.vocab_size())));
    }
    let logits = model.logits(tokens)?;
    let mut nll = 0.0;
    for i in 1..tokens.len() {
        let lp = log_softmax(logits.row(i - 1));
        nll -= lp[tokens[i] as usize];
    }
    Ok((nll / (tokens.len() - 1) as f64).exp())
}
