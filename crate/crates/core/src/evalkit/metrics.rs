// SPDX-License-Identifier: MIT OR Apache-2.0

//! Aggregate formulas: emotional-expression share, emotion-activation
//! score, target-emotion confidence and its intensity matrices, AUC.

use serde::{Deserialize, Serialize};

use crate::corpus::Emotion;
use crate::error::{Error, Result};
use crate::evalkit::classifier::{EmotionClassifier, EpsLabel};

/// Fraction of items whose three-way argmax is `emotional`.
pub fn eps_score(items: &[[f64; 3]]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Empty("eps over no items"));
    }
    let hits = items.iter().filter(|s| EpsLabel::argmax(**s) == EpsLabel::Emotional).count();
    Ok(hits as f64 / items.len() as f64)
}

/// Judged intensities `0..=100` for the six scored emotions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SixScores {
    pub anger: u32,
    pub disgust: u32,
    pub fear: u32,
    pub joy: u32,
    pub sadness: u32,
    pub surprise: u32,
}

impl SixScores {
    pub const KEYS: [&'static str; 6] = ["anger", "disgust", "fear", "joy", "sadness", "surprise"];

    pub fn values(&self) -> [u32; 6] {
        [self.anger, self.disgust, self.fear, self.joy, self.sadness, self.surprise]
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in Self::KEYS.iter().zip(self.values()) {
            if v > 100 {
                return Err(Error::Input(format!("{k} score {v} outside 0..=100")));
            }
        }
        Ok(())
    }
}

/// `Σ (score/100)²`, at most 6.
pub fn eas_score(scores: &SixScores) -> Result<f64> {
    scores.validate()?;
    Ok(scores.values().iter().map(|&v| (f64::from(v) / 100.0).powi(2)).sum())
}

/// Mean classifier probability of `target` over `responses`.
pub fn tec_score<C: EmotionClassifier + ?Sized>(responses: &[String], target: &str, classifier: &C) -> Result<f64> {
    if responses.is_empty() {
        return Err(Error::Empty("tec over no responses"));
    }
    let idx = classifier
        .labels()
        .iter()
        .position(|l| l == target)
        .ok_or_else(|| Error::Input(format!("classifier has no label {target:?}")))?;
    let probs: Vec<f64> = responses.iter().map(|r| classifier.classify(r)[idx]).collect();
    Ok(mean(&probs))
}

/// Sum in sorted order so the mean does not depend on item order.
pub(crate) fn mean(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Row order of the intensity matrices.
pub const TEC_ROWS: [Emotion; 6] =
    [Emotion::Anger, Emotion::Disgust, Emotion::Fear, Emotion::Joy, Emotion::Sadness, Emotion::Neutral];

/// Intensity multipliers of the matrix columns.
pub const TEC_ALPHAS: [f64; 4] = [0.0, 1.0, 2.0, 4.0];

/// Target-emotion confidence by origin emotion (rows) and intensity
/// (columns). Cells without responses are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TecMatrix {
    pub target: Emotion,
    pub alphas: Vec<f64>,
    pub rows: Vec<Emotion>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl TecMatrix {
    pub fn cell(&self, origin: Emotion, alpha: f64) -> Option<f64> {
        let r = self.rows.iter().position(|&e| e == origin)?;
        let c = self.alphas.iter().position(|&a| a == alpha)?;
        self.cells[r][c]
    }
}

/// One steered response for the matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TecItem {
    pub origin: Emotion,
    pub alpha: f64,
    pub response: String,
}

/// Build a matrix for `target` over the given origin rows and α columns.
/// Items whose α is not a column are rejected.
pub fn tec_matrix<C: EmotionClassifier + ?Sized>(
    items: &[TecItem],
    target: Emotion,
    rows: &[Emotion],
    alphas: &[f64],
    classifier: &C,
) -> Result<TecMatrix> {
    if let Some(bad) = items.iter().find(|i| !alphas.contains(&i.alpha)) {
        return Err(Error::Input(format!("α {} is not a matrix column", bad.alpha)));
    }
    let mut cells = Vec::with_capacity(rows.len());
    for &origin in rows {
        let mut row = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            let group: Vec<String> =
                items.iter().filter(|i| i.origin == origin && i.alpha == alpha).map(|i| i.response.clone()).collect();
            row.push(if group.is_empty() { None } else { Some(tec_score(&group, target.as_str(), classifier)?) });
        }
        cells.push(row);
    }
    Ok(TecMatrix { target, alphas: alphas.to_vec(), rows: rows.to_vec(), cells })
}

/// Area under the ROC curve: probability that a random positive scores
/// above a random negative, ties counting one half.
pub fn auc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Empty("auc needs both classes"));
    }
    let mut wins = 0.0;
    for &p in positives {
        for &n in negatives {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (positives.len() * negatives.len()) as f64)
}
