// SPDX-License-Identifier: MIT OR Apache-2.0

//! Geometry of per-query emotion vectors: within/between-class cosine
//! distances and a two-component PCA projection for plotting.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evcore::vector::EmotionVector;
use crate::numkit::cosine;

/// One sample: concatenated layer vectors with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub label: String,
    pub vector: Vec<f64>,
}

impl LabeledSample {
    pub fn from_ev(id: impl Into<String>, ev: &EmotionVector) -> Self {
        Self { id: id.into(), label: ev.emotion().to_string(), vector: ev.concatenated() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt(), count: xs.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaPoint {
    pub id: String,
    pub label: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryStats {
    /// Within-class cosine distance per label.
    pub within: BTreeMap<String, Summary>,
    /// All within-class pairs pooled.
    pub within_all: Summary,
    /// All between-class pairs pooled.
    pub between_all: Summary,
    /// Between-class distance per label pair, keyed `"a|b"` with `a < b`.
    pub between_pairs: BTreeMap<String, Summary>,
    /// Ids of zero-norm samples left out of every statistic.
    pub excluded: Vec<String>,
    pub pca: Vec<PcaPoint>,
    pub explained_variance_ratio: [f64; 2],
}

/// Cosine-distance summaries (`1 − cos`) and PCA(2) coordinates.
pub fn ev_stats(samples: &[LabeledSample]) -> Result<GeometryStats> {
    let dim = samples.first().map_or(0, |s| s.vector.len());
    if samples.iter().any(|s| s.vector.len() != dim) {
        return Err(Error::Dimension("samples differ in length".into()));
    }
    let (kept, dropped): (Vec<&LabeledSample>, Vec<&LabeledSample>) =
        samples.iter().partition(|s| s.vector.iter().any(|&x| x != 0.0));
    let excluded = dropped.iter().map(|s| s.id.clone()).collect();

    let mut per_label: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &kept {
        *per_label.entry(s.label.as_str()).or_default() += 1;
    }
    if per_label.len() < 2 || per_label.values().any(|&n| n < 2) {
        return Err(Error::Precondition(
            "geometry stats need at least two emotions with two usable samples each".into(),
        ));
    }

    let mut within: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut between: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let (mut w_all, mut b_all) = (Vec::new(), Vec::new());
    for i in 0..kept.len() {
        for j in i + 1..kept.len() {
            let (a, b) = (kept[i], kept[j]);
            let dist = 1.0 - cosine(&a.vector, &b.vector).expect("zero-norm samples excluded");
            if a.label == b.label {
                within.entry(a.label.clone()).or_default().push(dist);
                w_all.push(dist);
            } else {
                let (x, y) = if a.label < b.label { (&a.label, &b.label) } else { (&b.label, &a.label) };
                between.entry(format!("{x}|{y}")).or_default().push(dist);
                b_all.push(dist);
            }
        }
    }

    let (pca, explained_variance_ratio) = pca2(&kept);
    Ok(GeometryStats {
        within: within.into_iter().map(|(k, v)| (k, Summary::of(&v))).collect(),
        within_all: Summary::of(&w_all),
        between_all: Summary::of(&b_all),
        between_pairs: between.into_iter().map(|(k, v)| (k, Summary::of(&v))).collect(),
        excluded,
        pca,
        explained_variance_ratio,
    })
}

/// PCA(2) coordinates of arbitrary samples, with the explained-variance
/// ratio of each axis.
pub fn pca_2d(samples: &[LabeledSample]) -> Result<(Vec<PcaPoint>, [f64; 2])> {
    let dim = samples.first().map(|s| s.vector.len()).ok_or(Error::Empty("no samples to project"))?;
    if samples.iter().any(|s| s.vector.len() != dim) {
        return Err(Error::Dimension("samples differ in length".into()));
    }
    Ok(pca2(&samples.iter().collect::<Vec<_>>()))
}

/// Project centred samples onto the top two covariance eigenvectors.
///
/// Each axis is signed so its largest-magnitude loading is positive, which
/// makes the projection independent of sample order up to rounding.
fn pca2(samples: &[&LabeledSample]) -> (Vec<PcaPoint>, [f64; 2]) {
    let n = samples.len();
    let dim = samples[0].vector.len();
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(&s.vector) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centred = DMatrix::from_fn(n, dim, |i, j| samples[i].vector[j] - mean[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0).max(1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut axes = Vec::with_capacity(2);
    let mut ratio = [0.0; 2];
    for (k, &idx) in order.iter().take(2).enumerate() {
        let mut axis = eig.eigenvectors.column(idx).into_owned();
        let pivot = axis.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            axis = -axis;
        }
        ratio[k] = if total > 0.0 { eig.eigenvalues[idx].max(0.0) / total } else { 0.0 };
        axes.push(axis);
    }
    let coord = |i: usize, k: usize| axes.get(k).map_or(0.0, |a| centred.row(i).dot(&a.transpose()));
    let points = (0..n)
        .map(|i| PcaPoint {
            id: samples[i].id.clone(),
            label: samples[i].label.clone(),
            x: coord(i, 0),
            y: coord(i, 1),
        })
        .collect();
    (points, ratio)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(id: &str, label: &str, v: Vec<f64>) -> LabeledSample {
        LabeledSample { id: id.into(), label: label.into(), vector: v }
    }

    #[test]
    fn cosine_extremes() {
        let samples = vec![
            s("a1", "joy", vec![1.0, 0.0, 0.0]),
            s("a2", "joy", vec![2.0, 0.0, 0.0]),
            s("b1", "fear", vec![0.0, 3.0, 0.0]),
            s("b2", "fear", vec![0.0, 1.0, 0.0]),
        ];
        let st = ev_stats(&samples).unwrap();
        assert!(st.within_all.mean.abs() < 1e-12);
        assert!((st.between_all.mean - 1.0).abs() < 1e-12);
        assert_eq!(st.between_all.count, 4);
    }

    #[test]
    fn duplicated_cluster_has_zero_between_distance() {
        let samples = vec![
            s("a1", "joy", vec![1.0, 0.2]),
            s("a2", "joy", vec![0.9, 0.1]),
            s("b1", "joy2", vec![1.0, 0.2]),
            s("b2", "joy2", vec![0.9, 0.1]),
            s("c1", "fear", vec![-0.1, 1.0]),
            s("c2", "fear", vec![0.1, 1.0]),
        ];
        let st = ev_stats(&samples).unwrap();
        // two zero-distance pairs and two at the within distance
        let pair = st.between_pairs["joy|joy2"];
        assert!((pair.mean - st.within["joy"].mean / 2.0).abs() < 1e-12);
        let exact = vec![
            s("a1", "joy", vec![1.0, 0.0]),
            s("a2", "joy", vec![2.0, 0.0]),
            s("b1", "joy2", vec![1.0, 0.0]),
            s("b2", "joy2", vec![3.0, 0.0]),
            s("c1", "fear", vec![0.0, 1.0]),
            s("c2", "fear", vec![0.0, 2.0]),
        ];
        assert!(ev_stats(&exact).unwrap().between_pairs["joy|joy2"].mean.abs() < 1e-12);
    }

    #[test]
    fn zero_samples_are_excluded_and_reported() {
        let samples = vec![
            s("a1", "joy", vec![1.0, 0.0]),
            s("a2", "joy", vec![1.0, 0.1]),
            s("z", "joy", vec![0.0, 0.0]),
            s("b1", "fear", vec![0.0, 1.0]),
            s("b2", "fear", vec![0.1, 1.0]),
        ];
        let st = ev_stats(&samples).unwrap();
        assert_eq!(st.excluded, vec!["z".to_string()]);
        assert_eq!(st.pca.len(), 4);
    }

    #[test]
    fn preconditions() {
        let one_class = vec![s("a", "joy", vec![1.0]), s("b", "joy", vec![2.0])];
        assert!(matches!(ev_stats(&one_class), Err(Error::Precondition(_))));
        let thin = vec![s("a", "joy", vec![1.0, 0.0]), s("b", "fear", vec![0.0, 1.0]), s("c", "fear", vec![0.0, 2.0])];
        assert!(ev_stats(&thin).is_err());
    }

    #[test]
    fn pca_invariant_to_permutation() {
        let mut samples: Vec<LabeledSample> = (0..12)
            .map(|i| {
                let f = i as f64;
                let label = if i % 2 == 0 { "joy" } else { "fear" };
                s(&format!("q{i}"), label, vec![f.sin() * 3.0, f.cos(), (f * 0.7).sin(), 0.1 * f])
            })
            .collect();
        let a = ev_stats(&samples).unwrap();
        samples.reverse();
        samples.swap(2, 7);
        let b = ev_stats(&samples).unwrap();
        for p in &a.pca {
            let q = b.pca.iter().find(|q| q.id == p.id).unwrap();
            assert!((p.x.abs() - q.x.abs()).abs() < 1e-9 && (p.y.abs() - q.y.abs()).abs() < 1e-9);
        }
        assert!(a.explained_variance_ratio[0] >= a.explained_variance_ratio[1]);
    }
}
