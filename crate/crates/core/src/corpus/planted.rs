// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic corpora whose emotions are carried by disjoint marker bytes.
//!
//! Base text is lowercase words. An emotional response is its paired neutral
//! response with each word swapped, at `rate`, for an equally long run of
//! that emotion's marker bytes. Emotional queries end with one marker word so
//! that continuations of the query start out emotional.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{Emotion, PromptRecord};
use crate::error::{Error, Result};
use crate::nanoformer::Tokenizer;
use crate::numkit::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    /// Marker bytes for each basic emotion.
    pub markers: BTreeMap<Emotion, String>,
    /// Probability that a response word becomes a marker word.
    pub rate: f64,
    /// Inclusive word-count range of responses.
    pub response_words: (usize, usize),
    /// Inclusive word-count range of queries, before any marker word.
    pub query_words: (usize, usize),
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        let markers = [
            (Emotion::Joy, "ABCD"),
            (Emotion::Anger, "EFGH"),
            (Emotion::Disgust, "IJKL"),
            (Emotion::Fear, "MNOP"),
            (Emotion::Sadness, "QRST"),
        ]
        .into_iter()
        .map(|(e, m)| (e, m.to_string()))
        .collect();
        Self { markers, rate: 0.8, response_words: (6, 10), query_words: (3, 6), seed: 0 }
    }
}

const WORD_LEN: (usize, usize) = (3, 6);

fn base_byte(b: u8) -> bool {
    b.is_ascii_lowercase() || b == b' '
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in Emotion::BASIC {
            let m = self
                .markers
                .get(&e)
                .filter(|m| !m.is_empty())
                .ok_or_else(|| Error::Config(format!("no marker bytes for {e}")))?;
            for b in m.bytes() {
                if !b.is_ascii_graphic() || base_byte(b) {
                    return Err(Error::Config(format!(
                        "marker {:?} for {e} must be printable and not lowercase",
                        b as char
                    )));
                }
                if !seen.insert(b) {
                    return Err(Error::Config(format!("marker {:?} shared between emotions", b as char)));
                }
            }
        }
        if self.markers.contains_key(&Emotion::Neutral) {
            return Err(Error::Config("neutral takes no markers".into()));
        }
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::Config(format!("marker rate {} outside (0, 1]", self.rate)));
        }
        for (name, (lo, hi)) in [("response", self.response_words), ("query", self.query_words)] {
            if lo == 0 || lo > hi {
                return Err(Error::Config(format!("bad {name} word range {lo}..={hi}")));
            }
        }
        Ok(())
    }

    pub fn markers_for(&self, e: Emotion) -> &str {
        self.markers.get(&e).map_or("", String::as_str)
    }

    /// Token ids of each basic emotion's markers, in [`Emotion::BASIC`] order.
    pub fn marker_token_groups(&self) -> Vec<Vec<u32>> {
        Emotion::BASIC.iter().map(|&e| self.markers_for(e).bytes().map(Tokenizer::byte_id).collect()).collect()
    }

    /// Which emotion a byte marks, if any.
    pub fn emotion_of(&self, b: u8) -> Option<Emotion> {
        self.markers.iter().find(|(_, m)| m.as_bytes().contains(&b)).map(|(&e, _)| e)
    }
}

fn range(rng: &mut SeededRng, (lo, hi): (usize, usize)) -> usize {
    lo + rng.below(hi - lo + 1)
}

fn base_word(rng: &mut SeededRng) -> String {
    let n = range(rng, WORD_LEN);
    (0..n).map(|_| (b'a' + rng.below(26) as u8) as char).collect()
}

fn marker_word(rng: &mut SeededRng, markers: &[u8], len: usize) -> String {
    (0..len).map(|_| markers[rng.below(markers.len())] as char).collect()
}

/// `n_per_emotion` records for each basic emotion followed by `n_neutral`
/// neutral records. Deterministic in `spec.seed`.
pub fn generate_planted(spec: &PlantedSpec, n_per_emotion: usize, n_neutral: usize) -> Result<Vec<PromptRecord>> {
    spec.validate()?;
    if n_per_emotion == 0 {
        return Err(Error::Config("need at least one record per emotion".into()));
    }
    let mut rng = SeededRng::new(spec.seed);
    let mut out = Vec::with_capacity(5 * n_per_emotion + n_neutral);
    for e in Emotion::BASIC {
        let markers = spec.markers_for(e).as_bytes();
        for i in 0..n_per_emotion {
            let mut query: Vec<String> = (0..range(&mut rng, spec.query_words)).map(|_| base_word(&mut rng)).collect();
            query.push(marker_word(&mut rng, markers, WORD_LEN.0));
            let neutral: Vec<String> = (0..range(&mut rng, spec.response_words)).map(|_| base_word(&mut rng)).collect();
            let emotional: Vec<String> = neutral
                .iter()
                .map(|w| if rng.next_f64() < spec.rate { marker_word(&mut rng, markers, w.len()) } else { w.clone() })
                .collect();
            let mut rec = PromptRecord::new(format!("{e}-{i:03}"), e, query.join(" "));
            rec.emotion_prompt = Some(format!("answer with {e}"));
            rec.neutral_prompt = Some("answer neutrally".into());
            rec.emotion_response = Some(emotional.join(" "));
            rec.neutral_response = Some(neutral.join(" "));
            out.push(rec);
        }
    }
    for i in 0..n_neutral {
        let query: Vec<String> = (0..range(&mut rng, spec.query_words)).map(|_| base_word(&mut rng)).collect();
        let response: Vec<String> = (0..range(&mut rng, spec.response_words)).map(|_| base_word(&mut rng)).collect();
        let mut rec = PromptRecord::new(format!("neutral-{i:03}"), Emotion::Neutral, query.join(" "));
        rec.neutral_prompt = Some("answer neutrally".into());
        rec.neutral_response = Some(response.join(" "));
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_is_valid_and_disjoint() {
        let spec = PlantedSpec::default();
        spec.validate().unwrap();
        let groups = spec.marker_token_groups();
        let all: BTreeSet<u32> = groups.iter().flatten().copied().collect();
        assert_eq!(all.len(), groups.iter().map(Vec::len).sum::<usize>());
    }

    #[test]
    fn rejects_degenerate_specs() {
        let mut s = PlantedSpec::default();
        s.markers.insert(Emotion::Joy, String::new());
        assert!(s.validate().is_err());
        let mut s = PlantedSpec::default();
        s.markers.insert(Emotion::Fear, "AZ".into());
        assert!(s.validate().is_err());
        let mut s = PlantedSpec::default();
        s.markers.insert(Emotion::Fear, "az".into());
        assert!(s.validate().is_err());
        let s = PlantedSpec { rate: 0.0, ..PlantedSpec::default() };
        assert!(s.validate().is_err());
        assert!(generate_planted(&PlantedSpec::default(), 0, 3).is_err());
    }

    #[test]
    fn full_rate_always_marks() {
        let spec = PlantedSpec { rate: 1.0, response_words: (10, 10), ..PlantedSpec::default() };
        for r in generate_planted(&spec, 5, 5).unwrap() {
            if r.emotion.is_neutral() {
                assert!(r.neutral_response.unwrap().bytes().all(base_byte));
                continue;
            }
            let emo = r.emotion_response.unwrap();
            assert!(emo.bytes().any(|b| spec.emotion_of(b) == Some(r.emotion)));
            assert!(emo.bytes().all(|b| base_byte(b) || spec.emotion_of(b) == Some(r.emotion)));
            assert!(r.neutral_response.unwrap().bytes().all(base_byte));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = PlantedSpec::default();
        assert_eq!(generate_planted(&spec, 4, 2).unwrap(), generate_planted(&spec, 4, 2).unwrap());
        let other = PlantedSpec { seed: 1, ..spec.clone() };
        assert_ne!(generate_planted(&spec, 4, 2).unwrap(), generate_planted(&other, 4, 2).unwrap());
    }

    #[test]
    fn emotional_queries_end_with_their_markers() {
        let spec = PlantedSpec::default();
        for r in generate_planted(&spec, 3, 0).unwrap() {
            let last = r.query.bytes().last().unwrap();
            assert_eq!(spec.emotion_of(last), Some(r.emotion));
        }
    }
}
