// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run manifests: every output file is listed with its SHA-256 next to a
//! run id derived only from the inputs, so identical inputs give identical
//! bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use evsteer_core::digest::{sha256_hex, PartsDigest};
use evsteer_core::nanoformer::{nfmt, NanoModel};
use serde::Serialize;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub config_digest: String,
    pub model_digest: Option<String>,
    pub corpus_digest: Option<String>,
    /// Other content inputs (EV files, judge fixtures) by role.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Output path to content SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub struct Run {
    manifest: RunManifest,
}

impl Run {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        let config = serde_json::to_string(config)?;
        Ok(Self {
            manifest: RunManifest {
                run_id: String::new(),
                command: command.to_string(),
                config_digest: sha256_hex(config),
                model_digest: None,
                corpus_digest: None,
                inputs: BTreeMap::new(),
                seed: None,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                outputs: BTreeMap::new(),
            },
        })
    }

    pub fn model(&mut self, model: &NanoModel) -> &mut Self {
        self.manifest.model_digest = Some(nfmt::model_id(model));
        self
    }

    pub fn corpus(&mut self, bytes: &[u8]) -> &mut Self {
        self.manifest.corpus_digest = Some(sha256_hex(bytes));
        self
    }

    pub fn input(&mut self, role: impl Into<String>, bytes: &[u8]) -> &mut Self {
        self.manifest.inputs.insert(role.into(), sha256_hex(bytes));
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.manifest.seed = Some(seed);
        self
    }

    /// Digest of everything recorded so far except outputs.
    pub fn run_id(&self) -> String {
        let m = &self.manifest;
        let mut d = PartsDigest::new()
            .str(&m.command)
            .str(&m.config_digest)
            .str(m.model_digest.as_deref().unwrap_or(""))
            .str(m.corpus_digest.as_deref().unwrap_or(""))
            .str(&m.seed.map(|s| s.to_string()).unwrap_or_default())
            .str(&m.tool_version);
        for (k, v) in &m.inputs {
            d = d.str(k).str(v);
        }
        d.finish()
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.record(path)
    }

    /// Add a file already written by a library call.
    pub fn record(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading back {}", path.display()))?;
        self.manifest.outputs.insert(path.display().to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Write the manifest to `path` and return it.
    pub fn finish(mut self, path: &Path) -> Result<RunManifest> {
        self.manifest.run_id = self.run_id();
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }
}

/// Sidecar manifest path for a single-file output.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
