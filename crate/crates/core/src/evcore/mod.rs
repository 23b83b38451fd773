// SPDX-License-Identifier: MIT OR Apache-2.0

//! Emotion vector construction, storage and geometry.

pub mod evec;
mod stats;
mod vector;

pub use stats::{ev_stats, pca_2d, GeometryStats, LabeledSample, PcaPoint, Summary};
pub use vector::{
    build_base_vector, build_emotion_vector, combine, emotional_shift, EmotionVector, EvSet, ShiftSample, BASE_LABEL,
};
