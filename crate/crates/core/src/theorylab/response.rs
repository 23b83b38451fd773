// SPDX-License-Identifier: MIT OR Apache-2.0

//! Maps from per-layer residual offsets to final-position logits.

use nalgebra::{DMatrix, DVector};

use crate::digest::PartsDigest;
use crate::error::{Error, Result};
use crate::evcore::EmotionVector;
use crate::nanoformer::{nfmt, Injection, LogitRows, NanoModel};
use crate::numkit::SeededRng;
use crate::steer::SteeringConfig;

/// Offsets per layer; `None` leaves a layer untouched.
pub type Offsets = Vec<Option<Vec<f64>>>;

/// Anything the theory checks can perturb: `δ ↦ z(H + δ)` at the last
/// position, evaluated in `f64`.
pub trait ResponseMap: Sync {
    fn num_layers(&self) -> usize;
    fn width(&self) -> usize;
    fn vocab(&self) -> usize;
    fn logits(&self, offsets: &[Option<Vec<f64>>]) -> Result<Vec<f64>>;
    /// `‖H̄_l‖∞` of the unperturbed input to layer `l`, used to size FD steps.
    fn layer_scale(&self, l: usize) -> f64;
    /// Identity of the map and its evaluation point.
    fn digest(&self) -> String;
}

/// Offsets for `Σ_k α_k·EV^(k)` built exactly as the steering path builds
/// them, so α = 0 terms vanish without arithmetic.
pub fn blend_offsets(blend: &[(&EmotionVector, f64)], layers: usize) -> Offsets {
    SteeringConfig { blend: blend.iter().map(|(ev, a)| ((*ev).clone(), *a)).collect(), ..SteeringConfig::default() }
        .layer_offsets(layers)
}

/// Single-vector offsets `α·EV`.
pub fn scaled_offsets(ev: &EmotionVector, alpha: f64) -> Offsets {
    blend_offsets(&[(ev, alpha)], ev.num_layers())
}

/// The toy transformer evaluated on a fixed token sequence.
pub struct NanoProbe<'a> {
    model: &'a NanoModel,
    tokens: Vec<u32>,
    scales: Vec<f64>,
    digest: String,
}

impl<'a> NanoProbe<'a> {
    pub fn new(model: &'a NanoModel, tokens: &[u32]) -> Result<Self> {
        let raw = model.forward_raw::<f64>(tokens, None, LogitRows::Last)?;
        let d = model.width();
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(model.num_layers());
        let embed: Vec<f64> = tokens
            .iter()
            .enumerate()
            .flat_map(|(pos, &tok)| {
                let e = model.token_embed.row(tok as usize);
                let p = model.pos_embed.row(pos);
                (0..d).map(move |j| f64::from(e[j]) + f64::from(p[j]))
            })
            .collect();
        inputs.push(embed);
        inputs.extend(raw.layers.iter().take(model.num_layers() - 1).cloned());
        let scales = inputs.iter().map(|x| x.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
        let digest = PartsDigest::new().str("nanoformer").str(&nfmt::model_id(model)).u32s(tokens).finish();
        Ok(Self { model, tokens: tokens.to_vec(), scales, digest })
    }

    pub fn model(&self) -> &NanoModel {
        self.model
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }
}

impl ResponseMap for NanoProbe<'_> {
    fn num_layers(&self) -> usize {
        self.model.num_layers()
    }

    fn width(&self) -> usize {
        self.model.width()
    }

    fn vocab(&self) -> usize {
        self.model.vocab()
    }

    fn logits(&self, offsets: &[Option<Vec<f64>>]) -> Result<Vec<f64>> {
        let inj = Injection { offsets: offsets.to_vec(), from_position: 0 };
        let raw = if inj.is_noop() {
            self.model.forward_raw::<f64>(&self.tokens, None, LogitRows::Last)?
        } else {
            self.model.forward_raw(&self.tokens, Some(&inj), LogitRows::Last)?
        };
        Ok(raw.final_logits().to_vec())
    }

    fn layer_scale(&self, l: usize) -> f64 {
        self.scales[l]
    }

    fn digest(&self) -> String {
        self.digest.clone()
    }
}

/// Purely linear stand-in, `z = z₀ + Σ_l W_l·δ_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStack {
    weights: Vec<DMatrix<f64>>,
    base: DVector<f64>,
}

impl LinearStack {
    pub fn new(weights: Vec<DMatrix<f64>>, base: Vec<f64>) -> Result<Self> {
        let first = weights.first().ok_or(Error::Empty("linear stack with no layers"))?;
        let (v, d) = first.shape();
        if weights.iter().any(|w| w.shape() != (v, d)) || base.len() != v {
            return Err(Error::Dimension("linear stack shapes disagree".into()));
        }
        Ok(Self { weights, base: DVector::from_vec(base) })
    }

    /// Gaussian weights (sd `1/√d`) and base logits from `seed`.
    pub fn random(layers: usize, width: usize, vocab: usize, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let s = 1.0 / (width as f64).sqrt();
        let weights = (0..layers).map(|_| DMatrix::from_fn(vocab, width, |_, _| s * rng.next_gaussian())).collect();
        let base = (0..vocab).map(|_| rng.next_gaussian()).collect();
        Self::new(weights, base)
    }

    pub fn weight(&self, l: usize) -> &DMatrix<f64> {
        &self.weights[l]
    }
}

impl ResponseMap for LinearStack {
    fn num_layers(&self) -> usize {
        self.weights.len()
    }

    fn width(&self) -> usize {
        self.weights[0].ncols()
    }

    fn vocab(&self) -> usize {
        self.base.len()
    }

    fn logits(&self, offsets: &[Option<Vec<f64>>]) -> Result<Vec<f64>> {
        if offsets.len() != self.weights.len() {
            return Err(Error::Dimension(format!("{} offsets for {} layers", offsets.len(), self.weights.len())));
        }
        let mut z = self.base.clone();
        for (w, off) in self.weights.iter().zip(offsets) {
            if let Some(o) = off {
                if o.len() != w.ncols() {
                    return Err(Error::Dimension("offset width".into()));
                }
                z += w * DVector::from_column_slice(o);
            }
        }
        Ok(z.as_slice().to_vec())
    }

    fn layer_scale(&self, _l: usize) -> f64 {
        1.0
    }

    fn digest(&self) -> String {
        let mut d = PartsDigest::new().str("linear-stack").f64s(self.base.as_slice());
        for w in &self.weights {
            d = d.f64s(w.as_slice());
        }
        d.finish()
    }
}
