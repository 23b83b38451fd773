// SPDX-License-Identifier: MIT OR Apache-2.0

//! Loading emotion vectors from files or set directories, and the
//! `label:α,label:α` blend grammar.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use evsteer_core::evcore::evec::{load_ev, load_set, EVEC_EXTENSION};
use evsteer_core::evcore::{build_base_vector, EmotionVector, BASE_LABEL};

use crate::invalid;

/// Emotion vectors by label, plus an explicit base vector if one was given.
#[derive(Debug, Default)]
pub struct EvBank {
    members: BTreeMap<String, EmotionVector>,
    base: Option<EmotionVector>,
    /// Raw file bytes by path, for manifests.
    pub sources: BTreeMap<String, Vec<u8>>,
}

impl EvBank {
    pub fn load(paths: &[PathBuf]) -> Result<Self> {
        if paths.is_empty() {
            return Err(invalid("at least one --ev file or directory is required"));
        }
        let mut bank = Self::default();
        for p in paths {
            if p.is_dir() {
                let set = load_set(p)?;
                for ev in set.members().values() {
                    bank.insert(ev.clone())?;
                }
                for f in evec_files(p)? {
                    bank.sources.insert(f.display().to_string(), std::fs::read(&f)?);
                }
            } else {
                bank.insert(load_ev(p)?)?;
                bank.sources.insert(p.display().to_string(), std::fs::read(p)?);
            }
        }
        Ok(bank)
    }

    fn insert(&mut self, ev: EmotionVector) -> Result<()> {
        let label = ev.emotion().to_string();
        let slot_taken = if label == BASE_LABEL {
            self.base.replace(ev).is_some()
        } else {
            self.members.insert(label.clone(), ev).is_some()
        };
        if slot_taken {
            return Err(invalid(format!("emotion vector {label:?} given more than once")));
        }
        Ok(())
    }

    pub fn members(&self) -> &BTreeMap<String, EmotionVector> {
        &self.members
    }

    /// Vector for `label`; `base` falls back to the mean of the loaded members.
    pub fn get(&self, label: &str) -> Result<EmotionVector> {
        if label == BASE_LABEL {
            if let Some(b) = &self.base {
                return Ok(b.clone());
            }
            if self.members.is_empty() {
                return Err(invalid("no emotion vectors to build the base vector from"));
            }
            return Ok(build_base_vector(&self.members)?);
        }
        self.members.get(label).cloned().ok_or_else(|| {
            let known: Vec<&str> = self.members.keys().map(String::as_str).collect();
            invalid(format!("no emotion vector {label:?}; loaded: {}", known.join(", ")))
        })
    }

    /// Every loaded vector in label order, base last.
    pub fn all(&self) -> Vec<EmotionVector> {
        self.members.values().cloned().chain(self.base.clone()).collect()
    }
}

fn evec_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == EVEC_EXTENSION))
        .collect();
    files.sort();
    Ok(files)
}

/// Parse `label:α[,label:α...]`. Repeated labels are kept as separate terms,
/// which the steering sum adds together.
pub fn parse_blend(spec: &str) -> Result<Vec<(String, f64)>> {
    let terms: Vec<&str> = spec.split(',').map(str::trim).collect();
    if terms.iter().all(|t| t.is_empty()) {
        return Err(invalid("empty blend"));
    }
    terms
        .into_iter()
        .map(|t| {
            let (label, alpha) =
                t.rsplit_once(':').ok_or_else(|| invalid(format!("blend term {t:?} is not label:alpha")))?;
            let label = label.trim();
            let alpha: f64 = alpha.trim().parse().map_err(|_| invalid(format!("blend term {t:?} has a bad alpha")))?;
            if label.is_empty() || !alpha.is_finite() {
                return Err(invalid(format!("blend term {t:?} needs a label and a finite alpha")));
            }
            Ok((label.to_string(), alpha))
        })
        .collect()
}
