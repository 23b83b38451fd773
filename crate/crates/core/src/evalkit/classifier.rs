// SPDX-License-Identifier: MIT OR Apache-2.0

//! Text classifiers: multi-label emotion probabilities and the three-way
//! emotionless/neutral/emotional scorer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Emotion, PlantedSpec};
use crate::error::{Error, Result};

/// Independent per-label probabilities, each in `[0, 1]`.
pub trait EmotionClassifier: Sync {
    fn labels(&self) -> Vec<String>;
    /// One probability per entry of [`EmotionClassifier::labels`].
    fn classify(&self, text: &str) -> Vec<f64>;

    fn probability(&self, text: &str, label: &str) -> Option<f64> {
        let idx = self.labels().iter().position(|l| l == label)?;
        Some(self.classify(text)[idx])
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weighted substrings for one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelLexicon {
    pub label: String,
    pub entries: Vec<(String, f64)>,
    pub offset: f64,
}

/// `p(label) = logistic(slope · Σ weight·count(entry) + offset)` per label,
/// with non-overlapping substring counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconClassifier {
    pub lexicons: Vec<LabelLexicon>,
    pub slope: f64,
}

impl LexiconClassifier {
    pub fn new(lexicons: Vec<LabelLexicon>, slope: f64) -> Result<Self> {
        if lexicons.is_empty() {
            return Err(Error::Empty("classifier with no labels"));
        }
        for lex in &lexicons {
            if lex.entries.iter().any(|(t, w)| t.is_empty() || !w.is_finite()) || !lex.offset.is_finite() {
                return Err(Error::Config(format!("bad lexicon for {}", lex.label)));
            }
        }
        if !slope.is_finite() {
            return Err(Error::Config("non-finite slope".into()));
        }
        Ok(Self { lexicons, slope })
    }

    fn raw_score(lex: &LabelLexicon, text: &str) -> f64 {
        lex.entries.iter().map(|(tok, w)| w * text.matches(tok.as_str()).count() as f64).sum()
    }
}

impl EmotionClassifier for LexiconClassifier {
    fn labels(&self) -> Vec<String> {
        self.lexicons.iter().map(|l| l.label.clone()).collect()
    }

    fn classify(&self, text: &str) -> Vec<f64> {
        self.lexicons.iter().map(|lex| logistic(self.slope * Self::raw_score(lex, text) + lex.offset)).collect()
    }
}

/// Per-label probabilities keyed by label.
pub fn classify_lexicon(text: &str, classifier: &LexiconClassifier) -> BTreeMap<String, f64> {
    classifier.labels().into_iter().zip(classifier.classify(text)).collect()
}

/// Calibration used for planted corpora: two markers give 0.5.
pub const PLANTED_SLOPE: f64 = 1.5;
pub const PLANTED_OFFSET: f64 = -3.0;

/// Six-label classifier for a planted corpus. Each emotion counts its own
/// marker bytes; `neutral` starts high and drops with any marker.
pub fn planted_lexicon(spec: &PlantedSpec) -> LexiconClassifier {
    let mut lexicons: Vec<LabelLexicon> = Emotion::BASIC
        .iter()
        .map(|&e| LabelLexicon {
            label: e.to_string(),
            entries: spec.markers_for(e).chars().map(|c| (c.to_string(), 1.0)).collect(),
            offset: PLANTED_OFFSET,
        })
        .collect();
    lexicons.push(LabelLexicon {
        label: Emotion::Neutral.to_string(),
        entries: Emotion::BASIC
            .iter()
            .flat_map(|&e| spec.markers_for(e).chars().map(|c| (c.to_string(), -1.0)))
            .collect(),
        offset: -PLANTED_OFFSET,
    });
    LexiconClassifier::new(lexicons, PLANTED_SLOPE).expect("planted spec yields a valid lexicon")
}

/// The three classes of the emotional-expression scorer, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsLabel {
    Emotionless,
    Neutral,
    Emotional,
}

impl EpsLabel {
    pub const ALL: [EpsLabel; 3] = [EpsLabel::Emotionless, EpsLabel::Neutral, EpsLabel::Emotional];

    /// Highest score wins; ties go to the earliest label.
    pub fn argmax(scores: [f64; 3]) -> EpsLabel {
        let mut best = 0;
        for i in 1..3 {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        EpsLabel::ALL[best]
    }
}

/// Scores over {emotionless, neutral, emotional}.
pub trait ThreeWayScorer: Sync {
    fn scores(&self, text: &str) -> [f64; 3];

    fn label(&self, text: &str) -> EpsLabel {
        EpsLabel::argmax(self.scores(text))
    }
}

/// Three-way scorer on top of a multi-label classifier.
///
/// With `p` the largest probability among `emotion_labels`, the scores are
/// `[1 − p, 1 − |2p − 1|, p]`: emotionless below 1/3, emotional above 2/3,
/// neutral in between.
pub struct AffectScorer<'a, C: EmotionClassifier> {
    pub classifier: &'a C,
    pub emotion_labels: Vec<String>,
}

impl<'a, C: EmotionClassifier> AffectScorer<'a, C> {
    /// Uses every label except `neutral`.
    pub fn new(classifier: &'a C) -> Self {
        let emotion_labels = classifier.labels().into_iter().filter(|l| l != Emotion::Neutral.as_str()).collect();
        Self { classifier, emotion_labels }
    }
}

impl<C: EmotionClassifier> ThreeWayScorer for AffectScorer<'_, C> {
    fn scores(&self, text: &str) -> [f64; 3] {
        let labels = self.classifier.labels();
        let probs = self.classifier.classify(text);
        let p = labels
            .iter()
            .zip(&probs)
            .filter(|(l, _)| self.emotion_labels.contains(l))
            .fold(0.0f64, |m, (_, &p)| m.max(p));
        [1.0 - p, 1.0 - (2.0 * p - 1.0).abs(), p]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_offset() {
        let clf = planted_lexicon(&PlantedSpec::default());
        let p = classify_lexicon("", &clf);
        assert_eq!(p["joy"], logistic(PLANTED_OFFSET));
        assert_eq!(p["neutral"], logistic(-PLANTED_OFFSET));
        assert_eq!(p.len(), 6);
    }

    #[test]
    fn pure_markers_win() {
        let clf = planted_lexicon(&PlantedSpec::default());
        let p = classify_lexicon("ABCD DCBA", &clf);
        for (label, &v) in &p {
            if label != "joy" {
                assert!(p["joy"] > v, "{label}");
            }
        }
        assert!(p.values().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(EpsLabel::argmax([0.5, 0.5, 0.5]), EpsLabel::Emotionless);
        assert_eq!(EpsLabel::argmax([0.1, 0.5, 0.5]), EpsLabel::Neutral);
        assert_eq!(EpsLabel::argmax([0.1, 0.2, 0.9]), EpsLabel::Emotional);
    }

    #[test]
    fn affect_scorer_bands() {
        let clf = planted_lexicon(&PlantedSpec::default());
        let s = AffectScorer::new(&clf);
        assert_eq!(s.label("plain words"), EpsLabel::Emotionless);
        assert_eq!(s.label("EEEE FF"), EpsLabel::Emotional);
        assert_eq!(s.label("xx AB"), EpsLabel::Neutral);
    }

    #[test]
    fn invalid_lexicons_rejected() {
        let bad = LabelLexicon { label: "x".into(), entries: vec![(String::new(), 1.0)], offset: 0.0 };
        assert!(LexiconClassifier::new(vec![bad], 1.0).is_err());
        assert!(LexiconClassifier::new(vec![], 1.0).is_err());
    }
}
