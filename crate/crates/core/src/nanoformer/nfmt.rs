// SPDX-License-Identifier: MIT OR Apache-2.0

//! NFMT portable weight file.
//!
//! Layout: `b"NFMT"`, `u32` version, `u32` header length, JSON
//! [`ModelConfig`] header, then every tensor as little-endian `f32` in the
//! order token embedding, positional embedding, per layer
//! `ln1_gain ln1_bias wq wk wv wo ln2_gain ln2_bias w_in b_in w_out b_out`,
//! output projection, output bias.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nanoformer::config::ModelConfig;
use crate::nanoformer::model::{LayerWeights, NanoModel};
use crate::numkit::Mat;

pub const NFMT_MAGIC: &[u8; 4] = b"NFMT";
pub const NFMT_VERSION: u32 = 1;

fn put(buf: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize a model to NFMT bytes.
pub fn encode(model: &NanoModel) -> Vec<u8> {
    let header = serde_json::to_vec(&model.config).expect("config serializes");
    let mut buf = Vec::new();
    buf.extend_from_slice(NFMT_MAGIC);
    buf.extend_from_slice(&NFMT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    put(&mut buf, model.token_embed.data());
    put(&mut buf, model.pos_embed.data());
    for w in &model.layers {
        put(&mut buf, &w.ln1_gain);
        put(&mut buf, &w.ln1_bias);
        put(&mut buf, w.wq.data());
        put(&mut buf, w.wk.data());
        put(&mut buf, w.wv.data());
        put(&mut buf, w.wo.data());
        put(&mut buf, &w.ln2_gain);
        put(&mut buf, &w.ln2_bias);
        put(&mut buf, w.w_in.data());
        put(&mut buf, &w.b_in);
        put(&mut buf, w.w_out.data());
        put(&mut buf, &w.b_out);
    }
    put(&mut buf, model.unembed.data());
    put(&mut buf, &model.unembed_bias);
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Decode { offset: self.pos, reason: format!("truncated payload reading {what}") });
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let start = self.pos;
        let raw = self.take(n * 4, what)?;
        let vals: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::Decode { offset: start + 4 * i, reason: format!("non-finite value in {what}") });
        }
        Ok(vals)
    }

    fn mat(&mut self, rows: usize, cols: usize, what: &str) -> Result<Mat> {
        Ok(Mat::from_raw(rows, cols, self.floats(rows * cols, what)?))
    }
}

/// Validate the magic/version prefix and return the reader past the header.
pub(crate) fn check_prefix(bytes: &[u8], magic: &[u8; 4], version: u32) -> Result<(Vec<u8>, usize)> {
    let mut r = Reader { bytes, pos: 0 };
    let m = r.take(4, "magic")?;
    if m != magic {
        return Err(Error::Decode {
            offset: 0,
            reason: format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            ),
        });
    }
    let v = r.u32("version")?;
    if v != version {
        return Err(Error::Decode { offset: 4, reason: format!("unsupported version {v}, expected {version}") });
    }
    let len = r.u32("header length")? as usize;
    let header = r.take(len, "header")?.to_vec();
    Ok((header, r.pos))
}

/// Parse NFMT bytes, validating every tensor shape against the header.
pub fn decode(bytes: &[u8]) -> Result<NanoModel> {
    let (header, pos) = check_prefix(bytes, NFMT_MAGIC, NFMT_VERSION)?;
    let config: ModelConfig =
        serde_json::from_slice(&header).map_err(|e| Error::Decode { offset: 12, reason: format!("header: {e}") })?;
    config.validate()?;
    let mut r = Reader { bytes, pos };
    let (v, d, f, t) = (config.vocab, config.d_model, config.ffn_width(), config.max_seq);
    let token_embed = r.mat(v, d, "token embedding")?;
    let pos_embed = r.mat(t, d, "positional embedding")?;
    let mut layers = Vec::with_capacity(config.layers);
    for l in 0..config.layers {
        let name = |s: &str| format!("layer {l} {s}");
        layers.push(LayerWeights {
            ln1_gain: r.floats(d, &name("ln1_gain"))?,
            ln1_bias: r.floats(d, &name("ln1_bias"))?,
            wq: r.mat(d, d, &name("wq"))?,
            wk: r.mat(d, d, &name("wk"))?,
            wv: r.mat(d, d, &name("wv"))?,
            wo: r.mat(d, d, &name("wo"))?,
            ln2_gain: r.floats(d, &name("ln2_gain"))?,
            ln2_bias: r.floats(d, &name("ln2_bias"))?,
            w_in: r.mat(d, f, &name("w_in"))?,
            b_in: r.floats(f, &name("b_in"))?,
            w_out: r.mat(f, d, &name("w_out"))?,
            b_out: r.floats(d, &name("b_out"))?,
        });
    }
    let unembed = r.mat(v, d, "output projection")?;
    let unembed_bias = r.floats(v, "output bias")?;
    if r.pos != bytes.len() {
        return Err(Error::Decode { offset: r.pos, reason: format!("{} trailing bytes", bytes.len() - r.pos) });
    }
    Ok(NanoModel { config, token_embed, pos_embed, layers, unembed, unembed_bias })
}

pub fn save(model: &NanoModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<NanoModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Content hash of the model's NFMT encoding (first 16 bytes of SHA-256, hex).
pub fn model_id(model: &NanoModel) -> String {
    let digest = Sha256::digest(encode(model));
    hex::encode(&digest[..16])
}
