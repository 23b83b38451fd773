// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One tolerance comparison. `pass` is derived from the other fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// When set, `value` must be strictly greater than `min`.
    #[serde(default)]
    pub strict_min: bool,
    pub pass: bool,
}

impl Check {
    pub fn within(name: impl Into<String>, value: f64, min: Option<f64>, max: Option<f64>) -> Self {
        Self::build(name.into(), value, min, max, false)
    }

    pub fn at_most(name: impl Into<String>, value: f64, max: f64) -> Self {
        Self::within(name, value, None, Some(max))
    }

    pub fn at_least(name: impl Into<String>, value: f64, min: f64) -> Self {
        Self::within(name, value, Some(min), None)
    }

    pub fn positive(name: impl Into<String>, value: f64) -> Self {
        Self::build(name.into(), value, Some(0.0), None, true)
    }

    fn build(name: String, value: f64, min: Option<f64>, max: Option<f64>, strict_min: bool) -> Self {
        let mut c = Self { name, value, min, max, strict_min, pass: false };
        c.pass = c.evaluate();
        c
    }

    /// Re-derive the verdict; NaN never passes.
    pub fn evaluate(&self) -> bool {
        let lower = match self.min {
            Some(m) if self.strict_min => self.value > m,
            Some(m) => self.value >= m,
            None => !self.value.is_nan(),
        };
        let upper = self.max.is_none_or(|m| self.value <= m);
        lower && upper
    }
}

/// Outcome of one numerical theorem check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem: String,
    pub inputs_digest: String,
    pub pass: bool,
    pub measurements: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl TheoremReport {
    pub fn new(theorem: &str, inputs_digest: String) -> Self {
        Self {
            theorem: theorem.to_string(),
            inputs_digest,
            pass: false,
            measurements: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn measure(&mut self, key: impl Into<String>, value: f64) {
        self.measurements.insert(key.into(), value);
    }

    pub fn tolerance(&mut self, key: &str, value: f64) {
        self.tolerances.insert(key.to_string(), value);
    }

    pub fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Set `pass` from the checks: all must pass and there must be at least one.
    pub fn finish(mut self) -> Self {
        self.pass = self.derived_pass();
        self
    }

    pub fn derived_pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(Check::evaluate)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Key for per-α measurements, e.g. `r@0.05`.
pub(crate) fn keyed(prefix: &str, alpha: f64) -> String {
    format!("{prefix}@{alpha}")
}
