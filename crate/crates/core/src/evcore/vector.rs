// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nanoformer::TapTrace;
use crate::numkit::mean_rows;

/// Label used for the mean of all per-emotion vectors.
pub const BASE_LABEL: &str = "base";

/// Per-layer steering vectors for one emotion.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionVector {
    emotion: String,
    layers: Vec<Vec<f32>>,
    model_id: String,
    n_queries: u32,
    created_unix: u64,
    norms: Vec<f32>,
}

fn l2(v: &[f32]) -> f32 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt() as f32
}

impl EmotionVector {
    pub fn new(
        emotion: impl Into<String>,
        layers: Vec<Vec<f32>>,
        model_id: impl Into<String>,
        n_queries: u32,
    ) -> Result<Self> {
        let d = layers.first().map(Vec::len).ok_or(Error::Empty("emotion vector with no layers"))?;
        if d == 0 || layers.iter().any(|l| l.len() != d) {
            return Err(Error::Dimension("emotion vector layers differ in width".into()));
        }
        if layers.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Input("emotion vector has non-finite components".into()));
        }
        let norms = layers.iter().map(|l| l2(l)).collect();
        Ok(Self { emotion: emotion.into(), layers, model_id: model_id.into(), n_queries, created_unix: 0, norms })
    }

    pub fn with_created_unix(mut self, t: u64) -> Self {
        self.created_unix = t;
        self
    }

    pub fn emotion(&self) -> &str {
        &self.emotion
    }

    pub fn layers(&self) -> &[Vec<f32>] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &[f32] {
        &self.layers[l]
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn n_queries(&self) -> u32 {
        self.n_queries
    }

    pub fn created_unix(&self) -> u64 {
        self.created_unix
    }

    /// Cached per-layer L2 norms.
    pub fn norms(&self) -> &[f32] {
        &self.norms
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self) -> usize {
        self.layers[0].len()
    }

    /// All layers concatenated, in `f64`.
    pub fn concatenated(&self) -> Vec<f64> {
        self.layers.iter().flatten().map(|&x| f64::from(x)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().flatten().all(|&x| x == 0.0)
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.num_layers() != other.num_layers() || self.width() != other.width() {
            return Err(Error::Dimension(format!(
                "{} is {}x{}, {} is {}x{}",
                self.emotion,
                self.num_layers(),
                self.width(),
                other.emotion,
                other.num_layers(),
                other.width()
            )));
        }
        if self.model_id != other.model_id {
            return Err(Error::ModelMismatch { expected: self.model_id.clone(), found: other.model_id.clone() });
        }
        Ok(())
    }
}

/// Per-layer shift `ΔO_l` for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSample {
    pub query_id: String,
    pub layers: Vec<Vec<f32>>,
}

/// `mean_rows(O_l^emotion) − mean_rows(O_l^neutral)` for every layer.
///
/// Each trace is pooled over its own rows, so the two may differ in length.
/// Pass traces already restricted to response positions.
pub fn emotional_shift(
    query_id: impl Into<String>,
    emotion_trace: &TapTrace,
    neutral_trace: &TapTrace,
) -> Result<ShiftSample> {
    if emotion_trace.num_layers() != neutral_trace.num_layers() {
        return Err(Error::Dimension(format!(
            "layer count {} vs {}",
            emotion_trace.num_layers(),
            neutral_trace.num_layers()
        )));
    }
    let mut layers = Vec::with_capacity(emotion_trace.num_layers());
    for (e, n) in emotion_trace.layers.iter().zip(&neutral_trace.layers) {
        if e.cols() != n.cols() {
            return Err(Error::ModelMismatch {
                expected: format!("width {}", e.cols()),
                found: format!("width {}", n.cols()),
            });
        }
        let (me, mn) = (mean_rows(e)?, mean_rows(n)?);
        layers.push(me.iter().zip(&mn).map(|(a, b)| a - b).collect());
    }
    Ok(ShiftSample { query_id: query_id.into(), layers })
}

/// Mean of per-layer vectors, accumulated in `f64` in the given order.
fn mean_layers<'a>(
    items: impl Iterator<Item = (&'a [Vec<f32>], f64)>,
    layers: usize,
    d: usize,
    denom: f64,
) -> Vec<Vec<f32>> {
    let mut acc = vec![vec![0.0f64; d]; layers];
    for (item, w) in items {
        for (a, l) in acc.iter_mut().zip(item) {
            for (x, &v) in a.iter_mut().zip(l) {
                *x += w * f64::from(v);
            }
        }
    }
    acc.into_iter().map(|l| l.into_iter().map(|x| (x / denom) as f32).collect()).collect()
}

/// `EV_l = (1/N) Σ_i ΔO_l^(i)`, summed in ascending query-id order.
pub fn build_emotion_vector(shifts: &[ShiftSample], emotion: &str, model_id: &str) -> Result<EmotionVector> {
    let first = shifts.first().ok_or(Error::Empty("no shift samples"))?;
    let (layers, d) = (first.layers.len(), first.layers.first().map_or(0, Vec::len));
    if shifts.iter().any(|s| s.layers.len() != layers || s.layers.iter().any(|l| l.len() != d)) {
        return Err(Error::Dimension("shift samples differ in shape".into()));
    }
    let mut order: Vec<&ShiftSample> = shifts.iter().collect();
    order.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    let n = shifts.len();
    let mean = mean_layers(order.iter().map(|s| (s.layers.as_slice(), 1.0)), layers, d, n as f64);
    EmotionVector::new(emotion, mean, model_id, n as u32)
}

/// `EV^base = (1/K) Σ_k EV^(e_k)`, summed in label order.
pub fn build_base_vector(set: &BTreeMap<String, EmotionVector>) -> Result<EmotionVector> {
    let first = set.values().next().ok_or(Error::Empty("no emotion vectors"))?;
    for ev in set.values() {
        first.same_shape(ev)?;
    }
    let k = set.len();
    let mean =
        mean_layers(set.values().map(|ev| (ev.layers.as_slice(), 1.0)), first.num_layers(), first.width(), k as f64);
    let n = set.values().map(|ev| ev.n_queries).sum();
    EmotionVector::new(BASE_LABEL, mean, first.model_id.clone(), n)
}

/// `Σ_k α_k · EV^(e_k)` per layer, labelled with the blend it came from.
pub fn combine(weighted: &[(&EmotionVector, f64)]) -> Result<EmotionVector> {
    let (first, _) = weighted.first().ok_or(Error::Empty("empty blend"))?;
    for (ev, a) in weighted {
        first.same_shape(ev)?;
        if !a.is_finite() {
            return Err(Error::Input(format!("non-finite weight for {}", ev.emotion)));
        }
    }
    let sum =
        mean_layers(weighted.iter().map(|(ev, a)| (ev.layers.as_slice(), *a)), first.num_layers(), first.width(), 1.0);
    let label = weighted.iter().map(|(ev, a)| format!("{}:{a}", ev.emotion)).collect::<Vec<_>>().join(",");
    let n = weighted.iter().map(|(ev, _)| ev.n_queries).sum();
    EmotionVector::new(format!("blend({label})"), sum, first.model_id.clone(), n)
}

/// Per-emotion vectors plus their base vector, all from one model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvSet {
    members: BTreeMap<String, EmotionVector>,
    base: EmotionVector,
}

impl EvSet {
    pub fn new(members: impl IntoIterator<Item = EmotionVector>) -> Result<Self> {
        let members: BTreeMap<String, EmotionVector> = members.into_iter().map(|ev| (ev.emotion.clone(), ev)).collect();
        let base = build_base_vector(&members)?;
        Ok(Self { members, base })
    }

    pub fn base(&self) -> &EmotionVector {
        &self.base
    }

    pub fn members(&self) -> &BTreeMap<String, EmotionVector> {
        &self.members
    }

    /// Member by label; `"base"` resolves to the base vector.
    pub fn get(&self, label: &str) -> Option<&EmotionVector> {
        if label == BASE_LABEL {
            Some(&self.base)
        } else {
            self.members.get(label)
        }
    }
}
