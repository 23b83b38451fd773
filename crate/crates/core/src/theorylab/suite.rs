// SPDX-License-Identifier: MIT OR Apache-2.0

//! The five checks run together with one shared Jacobian stack.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::evcore::EmotionVector;
use crate::numkit::SeededRng;
use crate::par::Exec;
use crate::theorylab::checks::{
    check_additivity, check_first_order, check_monotonic_gain, check_semantic_bound, measure_curvature,
    random_unit_rows,
};
use crate::theorylab::fisher::{fisher_check, GaussianLayerSpec};
use crate::theorylab::jacobian::fd_jacobians;
use crate::theorylab::report::TheoremReport;
use crate::theorylab::response::ResponseMap;

/// Grids and sample sizes for [`run_suite`]. Defaults are the acceptance settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub first_order: Vec<f64>,
    pub gain: Vec<f64>,
    pub semantic_alpha: f64,
    pub semantic_samples: usize,
    /// Frozen remainder constant; measured on the first-order grid when absent.
    pub curvature: Option<f64>,
    pub additivity_pairs: Vec<(f64, f64)>,
    pub additivity_gain: Vec<f64>,
    pub fisher_dim: usize,
    pub fisher_samples: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            first_order: vec![0.1, 0.05, 0.025],
            gain: (1..=10).map(|i| f64::from(i) * 0.01).collect(),
            semantic_alpha: 0.02,
            semantic_samples: 20,
            curvature: None,
            additivity_pairs: vec![(0.1, 0.1), (0.05, 0.05), (0.025, 0.025)],
            additivity_gain: vec![0.02, 0.04, 0.08],
            fisher_dim: 16,
            fisher_samples: 10_000,
            seed: 0,
        }
    }
}

/// Anisotropic companion to the spherical Fisher case: `Σ = diag(4, 1, …)`,
/// `Δμ = (1, 1, 0, …)`, where the raw mean difference is not the Fisher
/// direction.
pub fn anisotropic_spec(d: usize, n: usize) -> GaussianLayerSpec {
    let mut spec = GaussianLayerSpec::spherical(d, 1.0, n);
    spec.mu_e[1] = 1.0;
    let mut sigma = DMatrix::identity(d, d);
    sigma[(0, 0)] = 4.0;
    spec.sigma = sigma;
    spec
}

/// First-order, monotonic-gain, semantic-bound and additivity checks on
/// `map`, plus the spherical and anisotropic Fisher checks.
pub fn run_suite(
    map: &dyn ResponseMap,
    ev: &EmotionVector,
    other: &EmotionVector,
    cfg: &SuiteConfig,
    exec: Exec,
) -> Result<Vec<TheoremReport>> {
    let jac = fd_jacobians(map, exec)?;
    let mut reports =
        vec![check_first_order(map, &jac, ev, &cfg.first_order)?, check_monotonic_gain(map, &jac, ev, &cfg.gain)?];
    let curvature = match cfg.curvature {
        Some(c) => c,
        None => measure_curvature(map, &jac, ev, &cfg.first_order)?,
    };
    let mut rng = SeededRng::new(cfg.seed);
    let us = random_unit_rows(&mut rng, cfg.semantic_samples, map.vocab());
    let mut semantic = check_semantic_bound(map, &jac, ev, &us, cfg.semantic_alpha, curvature)?;
    if cfg.curvature.is_none() {
        semantic.note("curvature measured on the first-order grid, not frozen");
    }
    reports.push(semantic);
    reports.push(check_additivity(map, &jac, ev, other, &cfg.additivity_pairs, &cfg.additivity_gain)?);
    let spherical = GaussianLayerSpec::spherical(cfg.fisher_dim, 1.0, cfg.fisher_samples);
    reports.push(fisher_check(&spherical, &mut SeededRng::new(cfg.seed))?);
    let aniso = anisotropic_spec(cfg.fisher_dim, cfg.fisher_samples);
    reports.push(fisher_check(&aniso, &mut SeededRng::new(cfg.seed))?);
    Ok(reports)
}
