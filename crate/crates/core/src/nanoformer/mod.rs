// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic toy decoder-only transformer with per-layer activation taps.

mod config;
mod lm;
mod model;
pub mod nfmt;
mod real;
pub mod tokenizer;

pub use config::ModelConfig;
pub use lm::{log_softmax, perplexity, LanguageModel};
pub use model::{layer_norm_rows, Injection, LayerWeights, LogitRows, NanoModel, RawTrace, TapTrace};
pub use real::Real;
pub use tokenizer::Tokenizer;
