// SPDX-License-Identifier: MIT OR Apache-2.0

//! Weights, construction and the forward pass of the toy decoder.
//!
//! Each block is pre-norm: `x += Attn(LN1(x)); x += FFN(LN2(x))`. The tap for
//! layer `l` is the residual stream after block `l`. Logits are read straight
//! off the last residual stream, `z = W_o·H_L + b`, with no final norm.

use crate::error::{Error, Result};
use crate::nanoformer::config::ModelConfig;
use crate::nanoformer::real::Real;
use crate::numkit::{gaussian_matrix, Mat, SeededRng};

const LN_EPS: f64 = 1e-5;
const TOKEN_EMBED_SCALE: f64 = 1.0;
const POS_EMBED_SCALE: f64 = 0.1;
const PLANTED_NOISE_SCALE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub ln1_gain: Vec<f32>,
    pub ln1_bias: Vec<f32>,
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
    pub ln2_gain: Vec<f32>,
    pub ln2_bias: Vec<f32>,
    pub w_in: Mat,
    pub b_in: Vec<f32>,
    pub w_out: Mat,
    pub b_out: Vec<f32>,
}

/// Deterministic decoder-only transformer. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct NanoModel {
    pub(crate) config: ModelConfig,
    pub(crate) token_embed: Mat,
    pub(crate) pos_embed: Mat,
    pub(crate) layers: Vec<LayerWeights>,
    /// Output projection, `V × d`.
    pub(crate) unembed: Mat,
    pub(crate) unembed_bias: Vec<f32>,
}

/// Which positions get logits computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogitRows {
    All,
    Last,
}

/// Per-layer residual offsets applied before each block executes.
#[derive(Debug, Clone)]
pub struct Injection<F> {
    /// One entry per layer; `None` leaves that layer untouched.
    pub offsets: Vec<Option<Vec<F>>>,
    /// Offsets are added at positions `from_position..T`.
    pub from_position: usize,
}

impl<F> Injection<F> {
    pub fn none(layers: usize) -> Self {
        Self { offsets: (0..layers).map(|_| None).collect(), from_position: 0 }
    }

    pub fn is_noop(&self) -> bool {
        self.offsets.iter().all(Option::is_none)
    }
}

/// Forward-pass output in the working precision.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace<F> {
    pub seq_len: usize,
    pub width: usize,
    pub vocab: usize,
    /// Block inputs are not stored; `layers[l]` is block `l`'s output (`T × d`).
    pub layers: Vec<Vec<F>>,
    /// Row-major logits for the requested rows.
    pub logits: Vec<F>,
    pub logit_rows: usize,
}

impl<F: Copy> RawTrace<F> {
    pub fn final_logits(&self) -> &[F] {
        &self.logits[(self.logit_rows - 1) * self.vocab..]
    }
}

/// Per-layer residual taps and logits of one `f32` forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TapTrace {
    /// `layers[l]` is `O_l`, the `T × d` residual stream after block `l`.
    pub layers: Vec<Mat>,
    /// `T × V` logits.
    pub logits: Mat,
}

impl TapTrace {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn seq_len(&self) -> usize {
        self.logits.rows()
    }

    pub fn final_logits(&self) -> &[f32] {
        self.logits.row(self.logits.rows() - 1)
    }

    /// Same trace restricted to rows `start..` (all layers and logits).
    pub fn tail(&self, start: usize) -> Result<TapTrace> {
        let end = self.seq_len();
        Ok(TapTrace {
            layers: self.layers.iter().map(|m| m.slice_rows(start, end)).collect::<Result<_>>()?,
            logits: self.logits.slice_rows(start, end)?,
        })
    }
}

fn constant(n: usize, v: f32) -> Vec<f32> {
    vec![v; n]
}

impl NanoModel {
    /// Build a model from its config.
    ///
    /// Draw order from `SeededRng(seed)`: token embedding (`V×d`, sd 1),
    /// positional embedding (`T_max×d`, sd 0.1), then for each layer
    /// `wq, wk, wv, wo, w_in, w_out` with sd `0.02/√L`. Norm gains are one,
    /// all biases zero, and the output projection starts tied to the token
    /// embedding.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(config.seed);
        let token_embed = gaussian_matrix(&mut rng, config.vocab, config.d_model, TOKEN_EMBED_SCALE);
        Ok(Self::assemble(config, token_embed, &mut rng))
    }

    /// Build a model whose token embedding has planted cluster structure.
    ///
    /// Every group in `groups` (plus one implicit group holding all remaining
    /// ids) gets a shared centre drawn first; each token's row is its centre
    /// plus sd-0.3 noise. The remaining draws follow [`NanoModel::build`].
    pub fn build_planted(config: ModelConfig, groups: &[Vec<u32>]) -> Result<Self> {
        config.validate()?;
        let mut cluster = vec![groups.len(); config.vocab];
        for (g, ids) in groups.iter().enumerate() {
            for &id in ids {
                let slot = cluster
                    .get_mut(id as usize)
                    .ok_or_else(|| Error::Config(format!("planted id {id} outside vocab {}", config.vocab)))?;
                if *slot != groups.len() {
                    return Err(Error::Config(format!("token id {id} in two planted groups")));
                }
                *slot = g;
            }
        }
        let mut rng = SeededRng::new(config.seed);
        let centres = gaussian_matrix(&mut rng, groups.len() + 1, config.d_model, TOKEN_EMBED_SCALE);
        let noise = gaussian_matrix(&mut rng, config.vocab, config.d_model, PLANTED_NOISE_SCALE);
        let mut data = Vec::with_capacity(config.vocab * config.d_model);
        for (v, &c) in cluster.iter().enumerate() {
            data.extend(centres.row(c).iter().zip(noise.row(v)).map(|(a, b)| a + b));
        }
        let token_embed = Mat::from_raw(config.vocab, config.d_model, data);
        Ok(Self::assemble(config, token_embed, &mut rng))
    }

    fn assemble(config: ModelConfig, token_embed: Mat, rng: &mut SeededRng) -> Self {
        let d = config.d_model;
        let f = config.ffn_width();
        let pos_embed = gaussian_matrix(rng, config.max_seq, d, POS_EMBED_SCALE);
        let scale = 0.02 / (config.layers as f64).sqrt();
        let layers = (0..config.layers)
            .map(|_| LayerWeights {
                ln1_gain: constant(d, 1.0),
                ln1_bias: constant(d, 0.0),
                wq: gaussian_matrix(rng, d, d, scale),
                wk: gaussian_matrix(rng, d, d, scale),
                wv: gaussian_matrix(rng, d, d, scale),
                wo: gaussian_matrix(rng, d, d, scale),
                ln2_gain: constant(d, 1.0),
                ln2_bias: constant(d, 0.0),
                w_in: gaussian_matrix(rng, d, f, scale),
                b_in: constant(f, 0.0),
                w_out: gaussian_matrix(rng, f, d, scale),
                b_out: constant(d, 0.0),
            })
            .collect();
        let unembed = token_embed.clone();
        Self { config, token_embed, pos_embed, layers, unembed, unembed_bias: constant(config.vocab, 0.0) }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_layers(&self) -> usize {
        self.config.layers
    }

    pub fn width(&self) -> usize {
        self.config.d_model
    }

    pub fn vocab(&self) -> usize {
        self.config.vocab
    }

    pub fn layer(&self, l: usize) -> &LayerWeights {
        &self.layers[l]
    }

    pub fn token_embedding(&self) -> &Mat {
        &self.token_embed
    }

    pub fn position_embedding(&self) -> &Mat {
        &self.pos_embed
    }

    pub fn unembedding(&self) -> &Mat {
        &self.unembed
    }

    /// Mutable access to a block, for constructing stubs in tests and probes.
    pub fn layer_mut(&mut self, l: usize) -> &mut LayerWeights {
        &mut self.layers[l]
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() || tokens.len() > self.config.max_seq {
            return Err(Error::SequenceLength { len: tokens.len(), max: self.config.max_seq });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.config.vocab) {
            return Err(Error::Input(format!("token id {bad} outside vocab {}", self.config.vocab)));
        }
        Ok(())
    }

    /// Unsteered `f32` forward pass recording every layer's output.
    pub fn forward_with_taps(&self, tokens: &[u32]) -> Result<TapTrace> {
        let raw = self.forward_raw::<f32>(tokens, None, LogitRows::All)?;
        Ok(self.to_tap_trace(raw))
    }

    pub(crate) fn to_tap_trace(&self, raw: RawTrace<f32>) -> TapTrace {
        let (t, d) = (raw.seq_len, raw.width);
        TapTrace {
            layers: raw.layers.into_iter().map(|x| Mat::from_raw(t, d, x)).collect(),
            logits: Mat::from_raw(raw.logit_rows, raw.vocab, raw.logits),
        }
    }

    /// Forward pass in precision `F`, optionally adding per-layer offsets to
    /// the residual stream before each block.
    pub fn forward_raw<F: Real>(
        &self,
        tokens: &[u32],
        injection: Option<&Injection<F>>,
        rows: LogitRows,
    ) -> Result<RawTrace<F>> {
        self.check_tokens(tokens)?;
        let (t, d) = (tokens.len(), self.config.d_model);
        if let Some(inj) = injection {
            if inj.offsets.len() != self.config.layers {
                return Err(Error::Dimension(format!(
                    "injection covers {} layers, model has {}",
                    inj.offsets.len(),
                    self.config.layers
                )));
            }
            if let Some(bad) = inj.offsets.iter().flatten().find(|v| v.len() != d) {
                return Err(Error::Dimension(format!("injection width {} for model width {d}", bad.len())));
            }
        }

        let mut x = Vec::with_capacity(t * d);
        for (pos, &tok) in tokens.iter().enumerate() {
            let e = self.token_embed.row(tok as usize);
            let p = self.pos_embed.row(pos);
            x.extend(e.iter().zip(p).map(|(&a, &b)| F::from_f32(a) + F::from_f32(b)));
        }

        let mut taps = Vec::with_capacity(self.config.layers);
        for l in 0..self.config.layers {
            if let Some(Some(offset)) = injection.map(|inj| &inj.offsets[l]) {
                let start = injection.map_or(0, |inj| inj.from_position);
                for row in x.chunks_exact_mut(d).skip(start) {
                    for (h, &o) in row.iter_mut().zip(offset) {
                        *h += o;
                    }
                }
            }
            self.run_block(l, &mut x, t);
            taps.push(x.clone());
        }

        let first = match rows {
            LogitRows::All => 0,
            LogitRows::Last => t - 1,
        };
        let v = self.config.vocab;
        let mut logits = Vec::with_capacity((t - first) * v);
        for h in x.chunks_exact(d).skip(first) {
            for tok in 0..v {
                let w = self.unembed.row(tok);
                let mut acc = F::ZERO;
                for (&wj, &hj) in w.iter().zip(h) {
                    acc += F::from_f32(wj) * hj;
                }
                logits.push(acc + F::from_f32(self.unembed_bias[tok]));
            }
        }
        Ok(RawTrace { seq_len: t, width: d, vocab: v, layers: taps, logits, logit_rows: t - first })
    }

    /// Apply block `l` in place to a `t × d` residual stream.
    pub fn run_block<F: Real>(&self, l: usize, x: &mut [F], t: usize) {
        let cfg = &self.config;
        let (d, heads, hd) = (cfg.d_model, cfg.heads, cfg.head_dim());
        let w = &self.layers[l];

        let h = layer_norm_rows(x, d, &w.ln1_gain, &w.ln1_bias);
        let q = linear(&h, t, &w.wq, None);
        let k = linear(&h, t, &w.wk, None);
        let v = linear(&h, t, &w.wv, None);
        let inv_scale = F::ONE / F::from_f64((hd as f64).sqrt());
        let mut attn = vec![F::ZERO; t * d];
        let mut scores = vec![F::ZERO; t];
        for head in 0..heads {
            let off = head * hd;
            for i in 0..t {
                let qi = &q[i * d + off..i * d + off + hd];
                let mut max = None;
                for j in 0..=i {
                    let kj = &k[j * d + off..j * d + off + hd];
                    let mut s = F::ZERO;
                    for (&a, &b) in qi.iter().zip(kj) {
                        s += a * b;
                    }
                    let s = s * inv_scale;
                    scores[j] = s;
                    max = Some(match max {
                        Some(m) if m >= s => m,
                        _ => s,
                    });
                }
                let max = max.unwrap_or(F::ZERO);
                let mut denom = F::ZERO;
                for s in scores.iter_mut().take(i + 1) {
                    *s = (*s - max).exp();
                    denom += *s;
                }
                let out = &mut attn[i * d + off..i * d + off + hd];
                for (j, &p) in scores.iter().take(i + 1).enumerate() {
                    let p = p / denom;
                    let vj = &v[j * d + off..j * d + off + hd];
                    for (o, &vv) in out.iter_mut().zip(vj) {
                        *o += p * vv;
                    }
                }
            }
        }
        let proj = linear(&attn, t, &w.wo, None);
        for (xi, pi) in x.iter_mut().zip(&proj) {
            *xi += *pi;
        }

        let h2 = layer_norm_rows(x, d, &w.ln2_gain, &w.ln2_bias);
        let mut hidden = linear(&h2, t, &w.w_in, Some(&w.b_in));
        for a in hidden.iter_mut() {
            *a = gelu(*a);
        }
        let ff = linear(&hidden, t, &w.w_out, Some(&w.b_out));
        for (xi, fi) in x.iter_mut().zip(&ff) {
            *xi += *fi;
        }
    }
}

/// `x (rows × k) · w (k × n) + bias`, summing over `k` in ascending order.
fn linear<F: Real>(x: &[F], rows: usize, w: &Mat, bias: Option<&[f32]>) -> Vec<F> {
    let (k, n) = (w.rows(), w.cols());
    debug_assert_eq!(x.len(), rows * k);
    let wd = w.data();
    let mut out = vec![F::ZERO; rows * n];
    for r in 0..rows {
        let xr = &x[r * k..(r + 1) * k];
        let or = &mut out[r * n..(r + 1) * n];
        for (kk, &xv) in xr.iter().enumerate() {
            let wr = &wd[kk * n..(kk + 1) * n];
            for (o, &wv) in or.iter_mut().zip(wr) {
                *o += xv * F::from_f32(wv);
            }
        }
        if let Some(b) = bias {
            for (o, &bv) in or.iter_mut().zip(b) {
                *o += F::from_f32(bv);
            }
        }
    }
    out
}

/// Per-row layer norm with population variance.
pub fn layer_norm_rows<F: Real>(x: &[F], d: usize, gain: &[f32], bias: &[f32]) -> Vec<F> {
    let inv_d = F::ONE / F::from_f64(d as f64);
    let eps = F::from_f64(LN_EPS);
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(d) {
        let mut mean = F::ZERO;
        for &v in row {
            mean += v;
        }
        let mean = mean * inv_d;
        let mut var = F::ZERO;
        for &v in row {
            let c = v - mean;
            var += c * c;
        }
        let inv_std = F::ONE / (var * inv_d + eps).sqrt();
        for ((&v, &g), &b) in row.iter().zip(gain).zip(bias) {
            out.push((v - mean) * inv_std * F::from_f32(g) + F::from_f32(b));
        }
    }
    out
}

#[inline]
fn gelu<F: Real>(x: F) -> F {
    // tanh approximation
    let c = F::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let half = F::from_f64(0.5);
    let cubic = F::from_f64(0.044715) * x * x * x;
    half * x * (F::ONE + (c * (x + cubic)).tanh())
}
