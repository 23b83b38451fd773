// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use evsteer_core::evcore::EmotionVector;
use evsteer_core::nanoformer::{tokenizer::BOS, ModelConfig, NanoModel};
use evsteer_core::numkit::{Mat, SeededRng};
use evsteer_core::par::Exec;
use evsteer_core::theorylab::*;
use nalgebra::DMatrix;

fn random_ev(label: &str, layers: usize, d: usize, seed: u64) -> EmotionVector {
    let mut rng = SeededRng::new(seed);
    let l = (0..layers).map(|_| (0..d).map(|_| rng.next_gaussian() as f32).collect()).collect();
    EmotionVector::new(label, l, "stub", 1).unwrap()
}

fn to_dmatrix(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| f64::from(m.get(i, j)))
}

#[test]
fn linear_stub_expansions_are_exact() {
    let stack = LinearStack::random(3, 6, 11, 5).unwrap();
    let a = random_ev("a", 3, 6, 1);
    let b = random_ev("b", 3, 6, 2);
    let jac = fd_jacobians(&stack, Exec::Serial).unwrap();
    for alpha in [0.1, 0.05, 0.025, 1.0] {
        assert!(first_order_residual(&stack, &jac, &a, alpha).unwrap() <= 1e-9);
        assert!(additivity_defect(&stack, &jac, &a, &b, (alpha, -alpha / 3.0)).unwrap() <= 1e-9);
    }
    let cfg = SuiteConfig { curvature: Some(0.0), ..SuiteConfig::default() };
    let reports = run_suite(&stack, &a, &b, &cfg, Exec::Parallel).unwrap();
    for r in &reports {
        assert!(r.pass, "{} failed: {:?}", r.theorem, r.failed_checks().collect::<Vec<_>>());
    }
    let gain = &reports[1];
    let g1 = gain.measurements["dg@0.01"];
    for i in 2..=10 {
        let a = f64::from(i) * 0.01;
        let g = gain.measurements[&format!("dg@{a}")];
        assert!((g - g1 * f64::from(i)).abs() <= 1e-9 * g.abs(), "Δg not linear at {a}");
    }
}

#[test]
fn last_layer_jacobian_is_the_unembedding_when_its_block_is_identity() {
    let mut model =
        NanoModel::build(ModelConfig { layers: 3, d_model: 8, heads: 2, vocab: 40, max_seq: 8, seed: 4 }).unwrap();
    let last = model.num_layers() - 1;
    let d = model.width();
    let zero = |r: usize, c: usize| Mat::zeros(r, c);
    let f = model.config().ffn_width();
    let lw = model.layer_mut(last);
    lw.wo = zero(d, d);
    lw.w_out = zero(f, d);
    let probe = NanoProbe::new(&model, &[BOS, 10, 20, 30]).unwrap();
    let jac = fd_jacobians(&probe, Exec::Serial).unwrap();
    let w = to_dmatrix(model.unembedding());
    let err = (&jac.jacobians[last] - &w).norm() / w.norm();
    assert!(err < 1e-9, "relative error {err}");
}

#[test]
fn chain_rule_holds_at_a_single_position() {
    let model =
        NanoModel::build(ModelConfig { layers: 3, d_model: 8, heads: 2, vocab: 40, max_seq: 8, seed: 9 }).unwrap();
    let probe = NanoProbe::new(&model, &[BOS]).unwrap();
    let jac = fd_jacobians(&probe, Exec::Serial).unwrap();
    let d = model.width();
    let mut h: Vec<f64> = (0..d)
        .map(|j| {
            f64::from(model.token_embedding().get(BOS as usize, j)) + f64::from(model.position_embedding().get(0, j))
        })
        .collect();
    let mut blocks = Vec::new();
    for l in 0..model.num_layers() {
        blocks.push(fd_block_jacobian(&model, l, &h).unwrap());
        model.run_block(l, &mut h, 1);
    }
    let w = to_dmatrix(model.unembedding());
    for l in 0..model.num_layers() {
        let mut pred = w.clone();
        for b in blocks[l..].iter().rev() {
            pred *= b;
        }
        let err = (&jac.jacobians[l] - &pred).norm() / pred.norm();
        assert!(err < 1e-6, "layer {l}: relative error {err}");
    }
}

/// Regression bound for the step-halving certificates on the desk model.
#[test]
fn desk_certificates_are_small() {
    let desk = common::desk();
    let probe = NanoProbe::new(&desk.model, &desk.probe_tokens()).unwrap();
    let jac = fd_jacobians(&probe, Exec::Parallel).unwrap();
    assert!(jac.certificates.iter().all(|&c| c < 1e-3), "{:?}", jac.certificates);
    assert!(jac.flagged.iter().all(|f| !f));
}

#[test]
fn huge_alpha_breaks_first_order() {
    let desk = common::desk();
    let probe = NanoProbe::new(&desk.model, &desk.probe_tokens()).unwrap();
    let jac = fd_jacobians(&probe, Exec::Parallel).unwrap();
    let r = check_first_order(&probe, &jac, desk.set.get("joy").unwrap(), &[10.0, 5.0, 2.5]).unwrap();
    assert!(!r.pass);
}

#[test]
fn aligned_readout_nearly_attains_the_bound() {
    let desk = common::desk();
    let ev = desk.set.get("joy").unwrap();
    let probe = NanoProbe::new(&desk.model, &desk.probe_tokens()).unwrap();
    let jac = fd_jacobians(&probe, Exec::Parallel).unwrap();
    let r = check_semantic_bound(&probe, &jac, ev, &[], 0.02, 1.0).unwrap();
    let (ds, bound) = (r.measurements["ds_aligned"], r.measurements["bound_aligned"]);
    assert!(ds <= bound * BOUND_SLACK && ds >= bound / 2.0, "ds {ds} bound {bound}");
}

#[test]
fn fisher_cases() {
    let sph = fisher_check(&GaussianLayerSpec::spherical(16, 1.0, 10_000), &mut SeededRng::new(0)).unwrap();
    assert!(sph.pass);
    assert!(sph.measurements["raw_cos"] >= FISHER_COSINE);
    let an = fisher_check(&anisotropic_spec(16, 10_000), &mut SeededRng::new(0)).unwrap();
    assert!(an.pass);
    assert!(an.measurements["raw_cos"] < FISHER_COSINE, "{}", an.measurements["raw_cos"]);
    assert!(an.measurements["whitened_cos"] >= FISHER_COSINE);
}

#[test]
fn fisher_error_shrinks_with_samples() {
    let spec = |n| GaussianLayerSpec { n_e: n, n_n: n, ..anisotropic_spec(4, n) };
    let errs: Vec<f64> = [100, 1_000, 10_000, 100_000]
        .iter()
        .map(|&n| fisher_angle_error(&spec(n), &mut SeededRng::new(3)).unwrap())
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn reports_serialize_with_their_schema() {
    let stack = LinearStack::random(2, 4, 5, 1).unwrap();
    let a = random_ev("a", 2, 4, 3);
    let jac = fd_jacobians(&stack, Exec::Serial).unwrap();
    let r = check_first_order(&stack, &jac, &a, &[0.1, 0.05]).unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    for key in ["theorem", "inputs_digest", "measurements", "tolerances", "pass"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r.pass, r.derived_pass());
    let again = check_first_order(&stack, &jac, &a, &[0.1, 0.05]).unwrap();
    assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());
}
