// SPDX-License-Identifier: MIT OR Apache-2.0

//! Central-difference Jacobians `J_l = ∂z/∂H_l` with step-halving certificates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::nanoformer::NanoModel;
use crate::par::{map_range, Exec};
use crate::theorylab::response::{Offsets, ResponseMap};

/// Relative disagreement between the `h` and `h/2` estimates above which a
/// layer is flagged.
pub const CERTIFICATE_LIMIT: f64 = 1e-2;

/// Base step before scaling by `max(1, ‖H̄_l‖∞)`.
pub const BASE_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianStack {
    /// `V × d` per layer, estimated with step `steps[l]`.
    pub jacobians: Vec<DMatrix<f64>>,
    /// Unperturbed logits `z(0)`.
    pub base: Vec<f64>,
    pub steps: Vec<f64>,
    /// `‖J_h − J_{h/2}‖_F / ‖J_{h/2}‖_F` per layer.
    pub certificates: Vec<f64>,
    pub flagged: Vec<bool>,
}

impl JacobianStack {
    pub fn num_layers(&self) -> usize {
        self.jacobians.len()
    }

    /// `Σ_l J_l·v_l`, skipping `None` layers.
    pub fn apply(&self, offsets: &[Option<Vec<f64>>]) -> Vec<f64> {
        let mut out = DVector::zeros(self.base.len());
        for (j, off) in self.jacobians.iter().zip(offsets) {
            if let Some(v) = off {
                out += j * DVector::from_column_slice(v);
            }
        }
        out.as_slice().to_vec()
    }

    /// `uᵀJ_l` for every layer.
    pub fn row_projections(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let u = DVector::from_column_slice(u);
        self.jacobians.iter().map(|j| (j.transpose() * &u).as_slice().to_vec()).collect()
    }

    pub fn max_certificate(&self) -> f64 {
        self.certificates.iter().copied().fold(0.0, f64::max)
    }
}

fn basis_offsets(layers: usize, l: usize, width: usize, j: usize, h: f64) -> Offsets {
    let mut offs: Offsets = vec![None; layers];
    let mut e = vec![0.0; width];
    e[j] = h;
    offs[l] = Some(e);
    offs
}

fn central(map: &dyn ResponseMap, l: usize, j: usize, h: f64) -> Result<Vec<f64>> {
    let (layers, d) = (map.num_layers(), map.width());
    let plus = map.logits(&basis_offsets(layers, l, d, j, h))?;
    let minus = map.logits(&basis_offsets(layers, l, d, j, -h))?;
    Ok(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect())
}

/// Estimate every `J_l` by central differences. Columns are computed
/// independently and assembled in index order.
pub fn fd_jacobians(map: &dyn ResponseMap, exec: Exec) -> Result<JacobianStack> {
    let (layers, d, v) = (map.num_layers(), map.width(), map.vocab());
    let base = map.logits(&vec![None; layers])?;
    let steps: Vec<f64> = (0..layers).map(|l| BASE_STEP * map.layer_scale(l).max(1.0)).collect();
    let columns = map_range(exec, layers * d, |k| {
        let (l, j) = (k / d, k % d);
        let full = central(map, l, j, steps[l])?;
        let half = central(map, l, j, steps[l] / 2.0)?;
        Ok::<_, Error>((full, half))
    });

    let mut jacobians = Vec::with_capacity(layers);
    let mut certificates = Vec::with_capacity(layers);
    let mut cols = columns.into_iter();
    for _ in 0..layers {
        let mut full = DMatrix::zeros(v, d);
        let mut half = DMatrix::zeros(v, d);
        for j in 0..d {
            let (f, h) = cols.next().expect("one result per column")?;
            full.set_column(j, &DVector::from_vec(f));
            half.set_column(j, &DVector::from_vec(h));
        }
        let scale = half.norm();
        let diff = (&full - &half).norm();
        certificates.push(if scale > 0.0 { diff / scale } else { diff });
        jacobians.push(full);
    }
    let flagged = certificates.iter().map(|&c| c > CERTIFICATE_LIMIT).collect();
    Ok(JacobianStack { jacobians, base, steps, certificates, flagged })
}

/// Central-difference Jacobian of block `l` on a single-position input row.
pub fn fd_block_jacobian(model: &NanoModel, l: usize, input: &[f64]) -> Result<DMatrix<f64>> {
    let d = model.width();
    if input.len() != d || l >= model.num_layers() {
        return Err(Error::Dimension(format!(
            "block jacobian needs a {d}-row at a layer below {}",
            model.num_layers()
        )));
    }
    let scale = input.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let h = BASE_STEP * scale;
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut plus = input.to_vec();
        let mut minus = input.to_vec();
        plus[j] += h;
        minus[j] -= h;
        model.run_block(l, &mut plus, 1);
        model.run_block(l, &mut minus, 1);
        for i in 0..d {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}
