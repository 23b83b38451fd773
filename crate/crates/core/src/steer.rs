// SPDX-License-Identifier: MIT OR Apache-2.0

//! Residual-stream steering: `Ĥ_l = H_l + Σ_k α_k·EV_l^(k)` before block `l`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::evcore::EmotionVector;
use crate::nanoformer::tokenizer::EOS;
use crate::nanoformer::{Injection, LogitRows, NanoModel, RawTrace, Real, TapTrace};

/// Which positions receive the offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApplyDuring {
    #[default]
    PromptAndGeneration,
    /// Only positions past the prompt; the first generated token is therefore
    /// predicted from an unsteered pass.
    GenerationOnly,
}

#[derive(Debug, Clone, Default)]
pub struct SteeringConfig {
    pub blend: Vec<(EmotionVector, f64)>,
    /// `None` steers every layer.
    pub layer_mask: Option<BTreeSet<usize>>,
    pub apply_during: ApplyDuring,
}

impl SteeringConfig {
    pub fn single(ev: EmotionVector, alpha: f64) -> Self {
        Self { blend: vec![(ev, alpha)], ..Self::default() }
    }

    pub fn with_mask(mut self, layers: impl IntoIterator<Item = usize>) -> Self {
        self.layer_mask = Some(layers.into_iter().collect());
        self
    }

    pub fn with_apply_during(mut self, mode: ApplyDuring) -> Self {
        self.apply_during = mode;
        self
    }

    /// Check shapes against `model` and that every α is finite.
    pub fn validate(&self, model: &NanoModel) -> Result<()> {
        for (ev, alpha) in &self.blend {
            if ev.num_layers() != model.num_layers() || ev.width() != model.width() {
                return Err(Error::Dimension(format!(
                    "{} is {}x{}, model is {}x{}",
                    ev.emotion(),
                    ev.num_layers(),
                    ev.width(),
                    model.num_layers(),
                    model.width()
                )));
            }
            if !alpha.is_finite() {
                return Err(Error::Input(format!("non-finite alpha for {}", ev.emotion())));
            }
        }
        if let Some(&bad) = self.layer_mask.iter().flatten().find(|&&l| l >= model.num_layers()) {
            return Err(Error::Input(format!("layer {bad} outside 0..{}", model.num_layers())));
        }
        Ok(())
    }

    /// Per-layer summed offsets; `None` where the layer is masked out or the
    /// blend sums to exactly zero. Terms with α = 0 are skipped entirely.
    pub fn layer_offsets(&self, layers: usize) -> Vec<Option<Vec<f64>>> {
        (0..layers)
            .map(|l| {
                if self.layer_mask.as_ref().is_some_and(|m| !m.contains(&l)) {
                    return None;
                }
                let mut sum: Option<Vec<f64>> = None;
                for (ev, alpha) in self.blend.iter().filter(|(_, a)| *a != 0.0) {
                    let acc = sum.get_or_insert_with(|| vec![0.0; ev.width()]);
                    for (s, &v) in acc.iter_mut().zip(ev.layer(l)) {
                        *s += alpha * f64::from(v);
                    }
                }
                sum.filter(|v| v.iter().any(|&x| x != 0.0))
            })
            .collect()
    }

    /// Injection plan in precision `F` for a pass whose prompt has
    /// `prompt_len` tokens.
    pub fn injection<F: Real>(&self, layers: usize, prompt_len: usize) -> Injection<F> {
        let offsets = self
            .layer_offsets(layers)
            .into_iter()
            .map(|o| o.map(|v| v.into_iter().map(F::from_f64).collect()))
            .collect();
        let from_position = match self.apply_during {
            ApplyDuring::PromptAndGeneration => 0,
            ApplyDuring::GenerationOnly => prompt_len,
        };
        Injection { offsets, from_position }
    }
}

fn run<F: Real>(
    model: &NanoModel,
    tokens: &[u32],
    cfg: &SteeringConfig,
    prompt_len: usize,
    rows: LogitRows,
) -> Result<RawTrace<F>> {
    cfg.validate(model)?;
    let inj = cfg.injection::<F>(model.num_layers(), prompt_len);
    if inj.is_noop() {
        model.forward_raw::<F>(tokens, None, rows)
    } else {
        model.forward_raw(tokens, Some(&inj), rows)
    }
}

/// Steered forward pass with taps. `tokens` is treated as the prompt, so
/// generation-only configs leave it untouched.
pub fn steered_forward(model: &NanoModel, tokens: &[u32], cfg: &SteeringConfig) -> Result<TapTrace> {
    let raw = run::<f32>(model, tokens, cfg, tokens.len(), LogitRows::All)?;
    Ok(model.to_tap_trace(raw))
}

/// Result of greedy decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    /// Generated ids, excluding the prompt and any terminating EOS.
    pub tokens: Vec<u32>,
    pub hit_eos: bool,
}

/// Greedy decoding with the full sequence recomputed every step.
pub fn generate(model: &NanoModel, prompt: &[u32], cfg: &SteeringConfig, max_new: usize) -> Result<Generation> {
    let max = model.config().max_seq;
    if prompt.is_empty() || prompt.len() + max_new > max {
        return Err(Error::SequenceLength { len: prompt.len() + max_new, max });
    }
    cfg.validate(model)?;
    let mut seq = prompt.to_vec();
    let mut out = Vec::with_capacity(max_new);
    for _ in 0..max_new {
        let raw = run::<f32>(model, &seq, cfg, prompt.len(), LogitRows::Last)?;
        let next = argmax(raw.final_logits());
        if next == EOS {
            return Ok(Generation { tokens: out, hit_eos: true });
        }
        seq.push(next);
        out.push(next);
    }
    Ok(Generation { tokens: out, hit_eos: false })
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(row: &[f32]) -> u32 {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}

/// Final-position `z(steered) − z(unsteered)`, both passes in `f64`.
pub fn logit_delta(model: &NanoModel, tokens: &[u32], cfg: &SteeringConfig) -> Result<Vec<f64>> {
    let steered = run::<f64>(model, tokens, cfg, tokens.len(), LogitRows::Last)?;
    let base = model.forward_raw::<f64>(tokens, None, LogitRows::Last)?;
    Ok(steered.final_logits().iter().zip(base.final_logits()).map(|(a, b)| a - b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nanoformer::ModelConfig;

    fn small() -> NanoModel {
        NanoModel::build(ModelConfig { layers: 2, d_model: 8, heads: 2, vocab: 260, max_seq: 32, seed: 3 }).unwrap()
    }

    fn ev(model: &NanoModel, scale: f32) -> EmotionVector {
        let layers = (0..model.num_layers())
            .map(|l| (0..model.width()).map(|j| scale * ((l * 7 + j) as f32).sin()).collect())
            .collect();
        EmotionVector::new("joy", layers, "m", 1).unwrap()
    }

    #[test]
    fn offsets_skip_zero_terms_and_cancel() {
        let m = small();
        let e = ev(&m, 1.0);
        let cfg = SteeringConfig::single(e.clone(), 0.0);
        assert!(cfg.layer_offsets(2).iter().all(Option::is_none));
        let cancel = SteeringConfig { blend: vec![(e.clone(), 1.0), (e.clone(), -1.0)], ..Default::default() };
        assert!(cancel.injection::<f32>(2, 0).is_noop());
        let masked = SteeringConfig::single(e, 1.0).with_mask([1]);
        let offs = masked.layer_offsets(2);
        assert!(offs[0].is_none() && offs[1].is_some());
    }

    #[test]
    fn validation_errors() {
        let m = small();
        let wrong = EmotionVector::new("joy", vec![vec![1.0; 4]; 2], "m", 1).unwrap();
        assert!(matches!(steered_forward(&m, &[1, 2], &SteeringConfig::single(wrong, 1.0)), Err(Error::Dimension(_))));
        let masked = SteeringConfig::single(ev(&m, 1.0), 1.0).with_mask([5]);
        assert!(steered_forward(&m, &[1, 2], &masked).is_err());
        let nan = SteeringConfig::single(ev(&m, 1.0), f64::NAN);
        assert!(steered_forward(&m, &[1, 2], &nan).is_err());
    }

    #[test]
    fn generation_respects_length_limit() {
        let m = small();
        let cfg = SteeringConfig::default();
        assert!(matches!(generate(&m, &[1; 30], &cfg, 3), Err(Error::SequenceLength { len: 33, max: 32 })));
        let g = generate(&m, &[1; 10], &cfg, 5).unwrap();
        assert!(g.tokens.len() <= 5);
    }

    #[test]
    fn generation_only_leaves_prompt_pass_unchanged() {
        let m = small();
        let cfg = SteeringConfig::single(ev(&m, 1.0), 2.0).with_apply_during(ApplyDuring::GenerationOnly);
        let steered = steered_forward(&m, &[1, 5, 9], &cfg).unwrap();
        assert_eq!(steered, m.forward_with_taps(&[1, 5, 9]).unwrap());
    }

    #[test]
    fn argmax_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }
}
