// SPDX-License-Identifier: MIT OR Apache-2.0

//! Emotion-vector steering toolkit.
//!
//! Extracts per-layer emotion vectors from paired emotional/neutral forward
//! passes of a small deterministic transformer, injects them into the
//! residual stream with continuous intensity, checks the first-order
//! perturbation theory numerically, and scores outputs with the standard
//! emotion-generation metrics.

pub mod corpus;
pub mod digest;
pub mod error;
pub mod evalkit;
pub mod evcore;
pub mod nanoformer;
pub mod numkit;
pub mod par;
pub mod pipeline;
pub mod steer;
pub mod theorylab;

pub use error::{Error, Result};
