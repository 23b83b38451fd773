// SPDX-License-Identifier: MIT OR Apache-2.0

//! Query corpora: JSONL loading/validation and planted synthetic corpora.

mod planted;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use planted::{generate_planted, PlantedSpec};

/// Emotion labels used by the corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Joy,
    Anger,
    Disgust,
    Fear,
    Sadness,
    Neutral,
}

impl Emotion {
    /// The five emotions that get their own vectors.
    pub const BASIC: [Emotion; 5] = [Emotion::Joy, Emotion::Anger, Emotion::Disgust, Emotion::Fear, Emotion::Sadness];

    pub const ALL: [Emotion; 6] =
        [Emotion::Joy, Emotion::Anger, Emotion::Disgust, Emotion::Fear, Emotion::Sadness, Emotion::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Joy => "joy",
            Emotion::Anger => "anger",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Sadness => "sadness",
            Emotion::Neutral => "neutral",
        }
    }

    pub fn is_neutral(self) -> bool {
        self == Emotion::Neutral
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Emotion::ALL.into_iter().find(|e| e.as_str() == s).ok_or_else(|| Error::Input(format!("unknown emotion {s:?}")))
    }
}

/// One corpus line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptRecord {
    pub id: String,
    pub emotion: Emotion,
    pub query: String,
    /// Instruction for the emotion-conditioned setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion_prompt: Option<String>,
    /// Instruction for the neutral setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neutral_prompt: Option<String>,
    /// Pre-recorded response under the emotional setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion_response: Option<String>,
    /// Pre-recorded response under the neutral setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neutral_response: Option<String>,
}

impl PromptRecord {
    pub fn new(id: impl Into<String>, emotion: Emotion, query: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            emotion,
            query: query.into(),
            emotion_prompt: None,
            neutral_prompt: None,
            emotion_response: None,
            neutral_response: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    EmotionQuery,
    EqPlus,
}

/// Emotional queries per basic emotion in a full EQ+ corpus.
pub const EQ_PLUS_PER_EMOTION: usize = 50;
pub const EQ_PLUS_NEUTRAL: usize = 150;
pub const EQ_PLUS_TOTAL: usize = 5 * EQ_PLUS_PER_EMOTION + EQ_PLUS_NEUTRAL;

/// Parse JSONL text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_corpus(text: &str) -> Result<Vec<PromptRecord>> {
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PromptRecord =
            serde_json::from_str(line).map_err(|e| Error::Schema { line: line_no, reason: e.to_string() })?;
        if rec.id.is_empty() {
            return Err(Error::Schema { line: line_no, reason: "empty id".into() });
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::Schema { line: line_no, reason: format!("duplicate id {:?}", rec.id) });
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Empty("corpus has no records"));
    }
    Ok(records)
}

/// Counts per label.
pub fn composition(records: &[PromptRecord]) -> BTreeMap<Emotion, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(r.emotion).or_insert(0) += 1;
    }
    counts
}

/// Enforce the 5×50 emotional + 150 neutral EQ+ split.
pub fn check_eq_plus(records: &[PromptRecord]) -> Result<()> {
    let counts = composition(records);
    let mut problems = Vec::new();
    for e in Emotion::ALL {
        let want = if e.is_neutral() { EQ_PLUS_NEUTRAL } else { EQ_PLUS_PER_EMOTION };
        let have = counts.get(&e).copied().unwrap_or(0);
        if have != want {
            problems.push(format!("{e}: {have} (want {want})"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Composition(format!("{} records; {}", records.len(), problems.join(", "))))
    }
}

/// Load and validate a JSONL corpus; `strict` enforces EQ+ composition.
pub fn load_corpus(path: impl AsRef<Path>, kind: CorpusKind, strict: bool) -> Result<Vec<PromptRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_corpus(&text)?;
    if kind == CorpusKind::EqPlus && strict {
        check_eq_plus(&records)?;
    }
    Ok(records)
}

/// One JSON object per line, in the given order.
pub fn to_jsonl(records: &[PromptRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records always serialize"));
        out.push('\n');
    }
    out
}

pub fn save_corpus(records: &[PromptRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_jsonl(records).as_bytes()).map_err(|e| Error::io(path, e))
}

/// The generation prompts used to build the original corpora, verbatim.
pub mod prompts {
    /// Emotional query generation; substitute `{emotion}`.
    pub const EMOTION_QUERY_TEMPLATE: &str = include_str!("../../prompts/emotion_query.txt");
    /// Neutral query generation.
    pub const NEUTRAL_QUERY_PROMPT: &str = include_str!("../../prompts/neutral_query.txt");

    pub fn emotion_query(emotion: &str) -> String {
        EMOTION_QUERY_TEMPLATE.replace("{emotion}", emotion)
    }
}
