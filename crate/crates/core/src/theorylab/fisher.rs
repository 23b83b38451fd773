// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fisher discriminant direction `v* = Σ⁻¹(μ_e − μ_n)` versus the plain
//! mean difference, on sampled Gaussian classes.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::digest::PartsDigest;
use crate::error::{Error, Result};
use crate::numkit::SeededRng;
use crate::theorylab::report::{Check, TheoremReport};

/// Minimum `|cos|` between the Fisher direction and the mean difference.
pub const FISHER_COSINE: f64 = 0.99;

/// Two Gaussian classes sharing one covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLayerSpec {
    pub mu_e: Vec<f64>,
    pub mu_n: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub n_e: usize,
    pub n_n: usize,
}

impl GaussianLayerSpec {
    /// `Σ = I`, `μ_e − μ_n = shift·e₀`.
    pub fn spherical(d: usize, shift: f64, n: usize) -> Self {
        let mut mu_e = vec![0.0; d];
        mu_e[0] = shift;
        Self { mu_e, mu_n: vec![0.0; d], sigma: DMatrix::identity(d, d), n_e: n, n_n: n }
    }

    pub fn dim(&self) -> usize {
        self.mu_e.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.mu_n.len() != d || self.sigma.shape() != (d, d) {
            return Err(Error::Dimension("gaussian spec shapes disagree".into()));
        }
        if (&self.sigma - self.sigma.transpose()).abs().max() > 1e-12 * self.sigma.abs().max() {
            return Err(Error::Input("covariance is not symmetric".into()));
        }
        if Cholesky::new(self.sigma.clone()).is_none() {
            return Err(Error::Input("covariance is not positive definite".into()));
        }
        Ok(())
    }

    fn is_spherical(&self) -> bool {
        let c = self.sigma[(0, 0)];
        self.sigma == DMatrix::identity(self.dim(), self.dim()) * c
    }

    fn digest(&self, n: usize) -> String {
        PartsDigest::new()
            .str("gaussian")
            .f64s(&self.mu_e)
            .f64s(&self.mu_n)
            .f64s(self.sigma.as_slice())
            .f64s(&[self.n_e as f64, self.n_n as f64, n as f64])
            .finish()
    }
}

/// Closed-form `Σ⁻¹·Δμ`.
pub fn fisher_direction(sigma: &DMatrix<f64>, mean_diff: &[f64]) -> Result<Vec<f64>> {
    let chol =
        Cholesky::new(sigma.clone()).ok_or_else(|| Error::Input("covariance is not positive definite".into()))?;
    Ok(chol.solve(&DVector::from_column_slice(mean_diff)).as_slice().to_vec())
}

fn cos(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = a.norm() * b.norm();
    if n == 0.0 {
        0.0
    } else {
        a.dot(b) / n
    }
}

struct Sampled {
    mean_e: DVector<f64>,
    mean_n: DVector<f64>,
    pooled: DMatrix<f64>,
}

fn draw(chol: &DMatrix<f64>, mu: &[f64], n: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let d = mu.len();
    let mut x = DMatrix::zeros(n, d);
    let mut z = DVector::zeros(d);
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = rng.next_gaussian();
        }
        let s = chol * &z;
        for j in 0..d {
            x[(i, j)] = mu[j] + s[j];
        }
    }
    x
}

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    x.row_mean().transpose()
}

fn scatter(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    c.transpose() * c
}

fn sample(spec: &GaussianLayerSpec, rng: &mut SeededRng) -> Result<Sampled> {
    let l = Cholesky::new(spec.sigma.clone())
        .ok_or_else(|| Error::Input("covariance is not positive definite".into()))?
        .l();
    let xe = draw(&l, &spec.mu_e, spec.n_e, rng);
    let xn = draw(&l, &spec.mu_n, spec.n_n, rng);
    let (me, mn) = (column_means(&xe), column_means(&xn));
    let pooled = (scatter(&xe, &me) + scatter(&xn, &mn)) / (spec.n_e + spec.n_n - 2) as f64;
    Ok(Sampled { mean_e: me, mean_n: mn, pooled })
}

/// `Σ̂⁻¹·v`, adding a ridge of `1e-6·trace/d` when `Σ̂` is singular.
fn solve_with_ridge(sigma: &DMatrix<f64>, v: &DVector<f64>) -> (DVector<f64>, f64) {
    if let Some(c) = Cholesky::new(sigma.clone()) {
        return (c.solve(v), 0.0);
    }
    let d = sigma.nrows();
    let ridge = 1e-6 * sigma.trace() / d as f64;
    let reg = sigma + DMatrix::identity(d, d) * ridge;
    let sol = Cholesky::new(reg).map_or_else(|| DVector::zeros(d), |c| c.solve(v));
    (sol, ridge)
}

/// Symmetric inverse square root `Σ^{-1/2}`.
fn inverse_sqrt(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(sigma.clone());
    let floor = 1e-12 * eig.eigenvalues.max().max(f64::MIN_POSITIVE);
    let inv = eig.eigenvalues.map(|v| 1.0 / v.max(floor).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Compare the sample Fisher direction with the sample mean difference.
///
/// `raw_cos` uses the data as drawn. `whitened_cos` first maps the data
/// through `Σ̂_cal^{-1/2}` estimated from an independent calibration batch
/// of the same size, then recomputes both directions. The whitened cosine
/// must reach 0.99; for a spherical `Σ` the raw cosine must too.
pub fn fisher_check(spec: &GaussianLayerSpec, rng: &mut SeededRng) -> Result<TheoremReport> {
    spec.validate()?;
    let d = spec.dim();
    if spec.n_e < 10 * d || spec.n_n < 10 * d {
        return Err(Error::Precondition(format!("need at least {} samples per class", 10 * d)));
    }
    let main = sample(spec, rng)?;
    let cal = sample(spec, rng)?;

    let mut report = TheoremReport::new("fisher", spec.digest(spec.n_e + spec.n_n));
    report.tolerance("min_cos", FISHER_COSINE);
    let diff = &main.mean_e - &main.mean_n;
    let (v_hat, ridge) = solve_with_ridge(&main.pooled, &diff);
    if ridge > 0.0 {
        report.note(format!("sample covariance singular; ridge {ridge:e} added"));
    }
    report.measure("ridge", ridge);
    let raw = cos(&v_hat, &diff).abs();
    report.measure("raw_cos", raw);

    let w = inverse_sqrt(&cal.pooled);
    let diff_w = &w * &diff;
    let pooled_w = &w * &main.pooled * &w;
    let (v_w, ridge_w) = solve_with_ridge(&pooled_w, &diff_w);
    report.measure("whitened_ridge", ridge_w);
    let whitened = cos(&v_w, &diff_w).abs();
    report.measure("whitened_cos", whitened);

    let pop_diff: Vec<f64> = spec.mu_e.iter().zip(&spec.mu_n).map(|(a, b)| a - b).collect();
    let truth = DVector::from_vec(fisher_direction(&spec.sigma, &pop_diff)?);
    report.measure("population_cos", cos(&v_hat, &truth).abs());

    report.check(Check::at_least("whitened_cos", whitened, FISHER_COSINE));
    if spec.is_spherical() {
        report.check(Check::at_least("raw_cos", raw, FISHER_COSINE));
    }
    Ok(report.finish())
}

/// Angle in radians between the sample and closed-form Fisher directions.
pub fn fisher_angle_error(spec: &GaussianLayerSpec, rng: &mut SeededRng) -> Result<f64> {
    spec.validate()?;
    let s = sample(spec, rng)?;
    let (v_hat, _) = solve_with_ridge(&s.pooled, &(&s.mean_e - &s.mean_n));
    let diff: Vec<f64> = spec.mu_e.iter().zip(&spec.mu_n).map(|(a, b)| a - b).collect();
    let truth = DVector::from_vec(fisher_direction(&spec.sigma, &diff)?);
    Ok(cos(&v_hat, &truth).abs().min(1.0).acos())
}
