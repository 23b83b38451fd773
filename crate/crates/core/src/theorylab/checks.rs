// SPDX-License-Identifier: MIT OR Apache-2.0

//! Perturbation-theory checks on a [`ResponseMap`] and its Jacobian stack.

use crate::digest::PartsDigest;
use crate::error::{Error, Result};
use crate::evcore::EmotionVector;
use crate::numkit::SeededRng;
use crate::theorylab::jacobian::JacobianStack;
use crate::theorylab::report::{keyed, Check, TheoremReport};
use crate::theorylab::response::{blend_offsets, scaled_offsets, ResponseMap};

/// Accepted range for `r(α/2)/r(α)`; exact quadratic decay gives 0.25.
pub const DECAY_WINDOW: (f64, f64) = (0.15, 0.45);
/// Residuals below this are treated as exact.
pub const NOISE_FLOOR: f64 = 1e-8;
/// Slack on the Cauchy–Schwarz bound covering FD error.
pub const BOUND_SLACK: f64 = 1.05;
/// Required ratio between aligned and orthogonal readout changes.
pub const SEPARATION: f64 = 10.0;
/// Allowed relative spread of `Δg(α)/α`.
pub const GAIN_SPREAD: f64 = 0.05;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ev_f64(ev: &EmotionVector) -> Vec<Option<Vec<f64>>> {
    ev.layers().iter().map(|l| Some(l.iter().map(|&x| f64::from(x)).collect())).collect()
}

fn ev_energy(ev: &EmotionVector) -> f64 {
    ev.concatenated().iter().map(|x| x * x).sum()
}

fn check_shapes(map: &dyn ResponseMap, jac: &JacobianStack, evs: &[&EmotionVector]) -> Result<()> {
    if jac.num_layers() != map.num_layers() || jac.base.len() != map.vocab() {
        return Err(Error::Dimension("jacobian stack does not match response map".into()));
    }
    for ev in evs {
        if ev.num_layers() != map.num_layers() || ev.width() != map.width() {
            return Err(Error::Dimension(format!(
                "{} is {}x{}, map is {}x{}",
                ev.emotion(),
                ev.num_layers(),
                ev.width(),
                map.num_layers(),
                map.width()
            )));
        }
    }
    Ok(())
}

/// `Δz(α) = z(α·EV) − z(0)`.
pub fn logit_shift(map: &dyn ResponseMap, jac: &JacobianStack, blend: &[(&EmotionVector, f64)]) -> Result<Vec<f64>> {
    let z = map.logits(&blend_offsets(blend, map.num_layers()))?;
    Ok(z.iter().zip(&jac.base).map(|(a, b)| a - b).collect())
}

/// First-order residual `r(α) = ‖Δz(α) − α·Σ_l J_l·EV_l‖`.
pub fn first_order_residual(map: &dyn ResponseMap, jac: &JacobianStack, ev: &EmotionVector, alpha: f64) -> Result<f64> {
    check_shapes(map, jac, &[ev])?;
    let dz = logit_shift(map, jac, &[(ev, alpha)])?;
    let pred = jac.apply(&scaled_offsets(ev, alpha));
    Ok(norm(&dz.iter().zip(&pred).map(|(a, b)| a - b).collect::<Vec<_>>()))
}

fn digest(map: &dyn ResponseMap, evs: &[&EmotionVector], params: &[f64]) -> String {
    let mut d = PartsDigest::new().str(&map.digest());
    for ev in evs {
        d = d.str(ev.emotion());
        for l in ev.layers() {
            d = d.f32s(l);
        }
    }
    d.f64s(params).finish()
}

fn halving_chain(grid: &[(f64, f64)]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::Precondition("need at least two grid points to test decay".into()));
    }
    let ok = grid.iter().all(|(a, b)| a.is_finite() && b.is_finite() && (*a > 0.0 || *b > 0.0))
        && grid.windows(2).all(|w| {
            let same = |x: f64, y: f64| (x / 2.0 - y).abs() <= 1e-12 * x.abs().max(1.0);
            same(w[0].0, w[1].0) && same(w[0].1, w[1].1)
        });
    if ok {
        Ok(())
    } else {
        Err(Error::Precondition("grid must be positive and halve at each step".into()))
    }
}

fn decay_checks(report: &mut TheoremReport, label: &str, alphas: &[f64], residuals: &[f64]) {
    for (w, r) in alphas.windows(2).zip(residuals.windows(2)) {
        let name = format!("{label}@{}/{label}@{}", w[1], w[0]);
        if r[0] < NOISE_FLOOR && r[1] < NOISE_FLOOR {
            report.check(Check::at_most(format!("{label}@{}", w[0]), r[0], NOISE_FLOOR));
        } else {
            let ratio = if r[0] > 0.0 { r[1] / r[0] } else { f64::INFINITY };
            report.check(Check::within(name, ratio, Some(DECAY_WINDOW.0), Some(DECAY_WINDOW.1)));
        }
    }
}

/// Quadratic decay of the first-order residual over a halving grid such as
/// `{0.1, 0.05, 0.025}`.
pub fn check_first_order(
    map: &dyn ResponseMap,
    jac: &JacobianStack,
    ev: &EmotionVector,
    alphas: &[f64],
) -> Result<TheoremReport> {
    check_shapes(map, jac, &[ev])?;
    halving_chain(&alphas.iter().map(|&a| (a, a)).collect::<Vec<_>>())?;
    if alphas.iter().any(|&a| a <= 0.0) {
        return Err(Error::Precondition("alpha grid must be positive".into()));
    }
    let mut report = TheoremReport::new("first_order", digest(map, &[ev], alphas));
    report.tolerance("decay_min", DECAY_WINDOW.0);
    report.tolerance("decay_max", DECAY_WINDOW.1);
    report.tolerance("noise_floor", NOISE_FLOOR);
    let residuals = alphas.iter().map(|&a| first_order_residual(map, jac, ev, a)).collect::<Result<Vec<_>>>()?;
    for (&a, &r) in alphas.iter().zip(&residuals) {
        report.measure(keyed("r", a), r);
    }
    report.measure("max_fd_certificate", jac.max_certificate());
    decay_checks(&mut report, "r", alphas, &residuals);
    Ok(report.finish())
}

/// Largest `r(α) / (α²·Σ_l ‖EV_l‖²)` over `alphas`: the empirical remainder
/// constant.
pub fn measure_curvature(
    map: &dyn ResponseMap,
    jac: &JacobianStack,
    ev: &EmotionVector,
    alphas: &[f64],
) -> Result<f64> {
    let energy = ev_energy(ev);
    if energy == 0.0 {
        return Err(Error::Precondition("zero emotion vector".into()));
    }
    let mut c: f64 = 0.0;
    for &a in alphas {
        c = c.max(first_order_residual(map, jac, ev, a)? / (a * a * energy));
    }
    Ok(c)
}

/// Unit readout along `Σ_l J_l·EV_l`.
pub fn emotion_readout(jac: &JacobianStack, ev: &EmotionVector) -> Result<Vec<f64>> {
    if ev.is_zero() {
        return Err(Error::Precondition(format!("{} is an all-zero vector", ev.emotion())));
    }
    let p = jac.apply(&ev_f64(ev));
    let n = norm(&p);
    if n == 0.0 {
        return Err(Error::Precondition("emotion vector has no first-order effect on logits".into()));
    }
    Ok(p.into_iter().map(|x| x / n).collect())
}

/// `Δg(α) = w_e·Δz(α)` must be positive and strictly increasing over an
/// increasing grid, with `w_e = normalize(Σ_l J_l·EV_l)`.
pub fn check_monotonic_gain(
    map: &dyn ResponseMap,
    jac: &JacobianStack,
    ev: &EmotionVector,
    alphas: &[f64],
) -> Result<TheoremReport> {
    check_shapes(map, jac, &[ev])?;
    let w = emotion_readout(jac, ev)?;
    if alphas.is_empty() || alphas[0] <= 0.0 || alphas.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Precondition("alpha grid must be positive and increasing".into()));
    }
    let mut report = TheoremReport::new("monotonic_gain", digest(map, &[ev], alphas));
    let gains = alphas.iter().map(|&a| Ok(dot(&w, &logit_shift(map, jac, &[(ev, a)])?))).collect::<Result<Vec<_>>>()?;
    for (&a, &g) in alphas.iter().zip(&gains) {
        report.measure(keyed("dg", a), g);
        report.check(Check::positive(keyed("dg", a), g));
    }
    for (a, g) in alphas.windows(2).zip(gains.windows(2)) {
        report.check(Check::positive(format!("dg@{}-dg@{}", a[1], a[0]), g[1] - g[0]));
    }
    let gamma = (0..jac.num_layers())
        .filter(|&l| ev.norms()[l] > 0.0)
        .map(|l| {
            let v: Vec<f64> = ev.layer(l).iter().map(|&x| f64::from(x)).collect();
            let mut offs = vec![None; jac.num_layers()];
            offs[l] = Some(v.clone());
            dot(&w, &jac.apply(&offs)) / dot(&v, &v)
        })
        .fold(f64::INFINITY, f64::min);
    report.measure("gamma_hat", gamma);
    Ok(report.finish())
}

/// `n` Gaussian-direction unit vectors of length `dim`.
pub fn random_unit_rows(rng: &mut SeededRng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
            let s = norm(&v);
            v.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

/// Cauchy–Schwarz bound on semantic readouts plus the aligned/orthogonal
/// separation.
///
/// For each `u`: `|u·Δz(α)| ≤ 1.05·α·(Σ‖uᵀJ_l‖²)^½·(Σ‖EV_l‖²)^½`. Each `u`
/// is also projected off `w_e`; those readouts must stay under
/// `10·α²·C·Σ‖EV_l‖²` and be at least 10× smaller than the aligned readout.
pub fn check_semantic_bound(
    map: &dyn ResponseMap,
    jac: &JacobianStack,
    ev: &EmotionVector,
    us: &[Vec<f64>],
    alpha: f64,
    curvature: f64,
) -> Result<TheoremReport> {
    check_shapes(map, jac, &[ev])?;
    if !(alpha > 0.0 && alpha.is_finite()) || us.iter().any(|u| u.len() != map.vocab()) {
        return Err(Error::Precondition("need alpha > 0 and vocab-length readouts".into()));
    }
    let w = emotion_readout(jac, ev)?;
    let dz = logit_shift(map, jac, &[(ev, alpha)])?;
    let energy = ev_energy(ev);
    let mut params = vec![alpha, curvature];
    params.extend(us.iter().flatten());
    let mut report = TheoremReport::new("semantic_bound", digest(map, &[ev], &params));
    report.tolerance("bound_slack", BOUND_SLACK);
    report.tolerance("separation", SEPARATION);
    report.tolerance("curvature", curvature);

    let bound_for = |u: &[f64]| {
        let rows: f64 = jac.row_projections(u).iter().map(|r| dot(r, r)).sum();
        alpha * rows.sqrt() * energy.sqrt()
    };
    for (i, u) in us.iter().enumerate() {
        let ds = dot(u, &dz).abs();
        let bound = bound_for(u);
        report.measure(format!("ds[{i}]"), ds);
        report.measure(format!("bound[{i}]"), bound);
        report.check(Check::at_most(format!("ds[{i}]-slack*bound"), ds - BOUND_SLACK * bound, 0.0));
    }

    let aligned = dot(&w, &dz).abs();
    report.measure("ds_aligned", aligned);
    report.measure("bound_aligned", bound_for(&w));
    let second_order = (10.0 * alpha * alpha * curvature * energy).max(NOISE_FLOOR);
    report.tolerance("orthogonal_limit", second_order);
    let mut worst: f64 = 0.0;
    for (i, u) in us.iter().enumerate() {
        let along = dot(u, &w);
        let o: Vec<f64> = u.iter().zip(&w).map(|(x, y)| x - along * y).collect();
        let n = norm(&o);
        if n == 0.0 {
            continue;
        }
        let ds = dot(&o, &dz).abs() / n;
        worst = worst.max(ds);
        report.measure(format!("ds_orth[{i}]"), ds);
        report.check(Check::at_most(format!("ds_orth[{i}]"), ds, second_order));
    }
    report.measure("ds_orth_max", worst);
    if !us.is_empty() {
        let separation = if worst > 0.0 { aligned / worst } else { f64::INFINITY };
        report.measure("separation", separation);
        report.check(Check::at_least("aligned/orthogonal", separation, SEPARATION));
    }
    Ok(report.finish())
}

/// Additivity defect `‖Δz(α₁a+α₂b) − Δz(α₁a) − Δz(α₂b)‖`.
pub fn additivity_defect(
    map: &dyn ResponseMap,
    jac: &JacobianStack,
    a: &EmotionVector,
    b: &EmotionVector,
    alphas: (f64, f64),
) -> Result<f64> {
    check_shapes(map, jac, &[a, b])?;
    let joint = logit_shift(map, jac, &[(a, alphas.0), (b, alphas.1)])?;
    let da = logit_shift(map, jac, &[(a, alphas.0)])?;
    let db = logit_shift(map, jac, &[(b, alphas.1)])?;
    let diff: Vec<f64> = (0..joint.len()).map(|i| joint[i] - da[i] - db[i]).collect();
    Ok(norm(&diff))
}

/// Quadratic decay of the additivity defect under joint halving, and
/// near-constant `Δg(α)/α` for the summed direction.
pub fn check_additivity(
    map: &dyn ResponseMap,
    jac: &JacobianStack,
    a: &EmotionVector,
    b: &EmotionVector,
    pairs: &[(f64, f64)],
    gain_alphas: &[f64],
) -> Result<TheoremReport> {
    check_shapes(map, jac, &[a, b])?;
    if a.layers() == b.layers() {
        return Err(Error::Precondition("additivity needs two distinct vectors".into()));
    }
    halving_chain(pairs)?;
    if gain_alphas.iter().any(|&x| x <= 0.0) || gain_alphas.len() < 2 {
        return Err(Error::Precondition("gain grid needs two or more positive alphas".into()));
    }
    let mut params: Vec<f64> = pairs.iter().flat_map(|&(x, y)| [x, y]).collect();
    params.extend(gain_alphas);
    let mut report = TheoremReport::new("additivity", digest(map, &[a, b], &params));
    report.tolerance("decay_min", DECAY_WINDOW.0);
    report.tolerance("decay_max", DECAY_WINDOW.1);
    report.tolerance("gain_spread", GAIN_SPREAD);

    let defects = pairs.iter().map(|&p| additivity_defect(map, jac, a, b, p)).collect::<Result<Vec<_>>>()?;
    let scale: Vec<f64> = pairs.iter().map(|&(x, y)| x.abs() + y.abs()).collect();
    for (&(x, y), &d) in pairs.iter().zip(&defects) {
        report.measure(format!("defect@({x},{y})"), d);
    }
    decay_checks(&mut report, "defect", &scale, &defects);

    let w = {
        let mut p = jac.apply(&ev_f64(a));
        for (x, y) in p.iter_mut().zip(jac.apply(&ev_f64(b))) {
            *x += y;
        }
        let n = norm(&p);
        if n == 0.0 {
            return Err(Error::Precondition("summed vector has no first-order effect".into()));
        }
        p.into_iter().map(|x| x / n).collect::<Vec<_>>()
    };
    let ratios = gain_alphas
        .iter()
        .map(|&al| Ok(dot(&w, &logit_shift(map, jac, &[(a, al), (b, al)])?) / al))
        .collect::<Result<Vec<_>>>()?;
    for (&al, &r) in gain_alphas.iter().zip(&ratios) {
        report.measure(keyed("dg/alpha", al), r);
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let spread = if mean != 0.0 { (hi - lo) / mean.abs() } else { f64::INFINITY };
    report.measure("gain_spread", spread);
    report.check(Check::at_most("dg/alpha spread", spread, GAIN_SPREAD));
    Ok(report.finish())
}
