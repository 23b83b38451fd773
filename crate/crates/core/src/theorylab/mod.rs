// SPDX-License-Identifier: MIT OR Apache-2.0

//! Numerical checks of the first-order steering theory, all in `f64`.
//!
//! Everything works on a [`ResponseMap`]: the toy transformer at a fixed
//! token sequence ([`NanoProbe`]) or an exactly linear stand-in
//! ([`LinearStack`]) on which every expansion is exact.

mod checks;
mod fisher;
mod jacobian;
mod report;
mod response;
mod suite;

pub use checks::{
    additivity_defect, check_additivity, check_first_order, check_monotonic_gain, check_semantic_bound,
    emotion_readout, first_order_residual, logit_shift, measure_curvature, random_unit_rows, BOUND_SLACK, DECAY_WINDOW,
    GAIN_SPREAD, NOISE_FLOOR, SEPARATION,
};
pub use fisher::{fisher_angle_error, fisher_check, fisher_direction, GaussianLayerSpec, FISHER_COSINE};
pub use jacobian::{fd_block_jacobian, fd_jacobians, JacobianStack, BASE_STEP, CERTIFICATE_LIMIT};
pub use report::{Check, TheoremReport};
pub use response::{blend_offsets, scaled_offsets, LinearStack, NanoProbe, Offsets, ResponseMap};
pub use suite::{anisotropic_spec, run_suite, SuiteConfig};
