// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-item metric reports with JSON and CSV output.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::metrics::mean;
use crate::nanoformer::{perplexity, LanguageModel, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    Ppl,
    Eps,
    Eas,
    Tec,
    TopicAdherence,
}

impl MetricId {
    pub const ALL: [MetricId; 5] =
        [MetricId::Ppl, MetricId::Eps, MetricId::Eas, MetricId::Tec, MetricId::TopicAdherence];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Ppl => "ppl",
            MetricId::Eps => "eps",
            MetricId::Eas => "eas",
            MetricId::Tec => "tec",
            MetricId::TopicAdherence => "topic_adherence",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricId::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::Input(format!("unknown metric {s:?}")))
    }
}

/// What produced a row: model id, vector label and intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub model: String,
    pub ev: String,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub query_id: String,
    pub condition: Condition,
    /// `None` for items the scorer could not rate.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: MetricId,
    /// Mean of the valid row scores.
    pub aggregate: Option<f64>,
    pub invalid: usize,
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn from_rows(metric: MetricId, rows: Vec<MetricRow>) -> Self {
        let (aggregate, invalid) = Self::aggregate_of(&rows);
        Self { metric, aggregate, invalid, rows }
    }

    fn aggregate_of(rows: &[MetricRow]) -> (Option<f64>, usize) {
        let valid: Vec<f64> = rows.iter().filter_map(|r| r.score).collect();
        let agg = (!valid.is_empty()).then(|| mean(&valid));
        (agg, rows.len() - valid.len())
    }

    /// `true` when the stored aggregate and invalid count match the rows exactly.
    pub fn is_consistent(&self) -> bool {
        let (agg, invalid) = Self::aggregate_of(&self.rows);
        invalid == self.invalid && agg.map(f64::to_bits) == self.aggregate.map(f64::to_bits)
    }

    /// Rows matching one condition, as a new report.
    pub fn filter(&self, keep: impl Fn(&Condition) -> bool) -> Self {
        Self::from_rows(self.metric, self.rows.iter().filter(|r| keep(&r.condition)).cloned().collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if !r.is_consistent() {
            return Err(Error::Input("report aggregate disagrees with its rows".into()));
        }
        Ok(r)
    }

    /// One line per row: `metric,query_id,model,ev,alpha,score`; invalid
    /// scores are empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Input(format!("csv: {e}"));
        w.write_record(["metric", "query_id", "model", "ev", "alpha", "score"]).map_err(io)?;
        for r in &self.rows {
            let score = r.score.map(|s| s.to_string()).unwrap_or_default();
            w.write_record([
                self.metric.as_str(),
                &r.query_id,
                &r.condition.model,
                &r.condition.ev,
                &r.condition.alpha.to_string(),
                &score,
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Input(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields is utf-8"))
    }
}

/// Perplexity of `response` scored after `query`, over the whole pair.
pub fn pair_perplexity(model: &impl LanguageModel, query: &str, response: &str) -> Result<f64> {
    let (tokens, _) = Tokenizer.encode_pair(query, response);
    perplexity(model, &tokens)
}
