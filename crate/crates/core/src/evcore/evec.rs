// SPDX-License-Identifier: MIT OR Apache-2.0

//! EVEC file format.
//!
//! `b"EVEC"`, `u32` version 1, `u32` header length, JSON header
//! `{emotion, model_id, L, d, n_queries, created_unix}`, then `L·d`
//! little-endian `f32` values, layer-major. An [`EvSet`] on disk is a
//! directory of `<emotion>.evec` files plus `base.evec`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evcore::vector::{EmotionVector, EvSet, BASE_LABEL};
use crate::nanoformer::nfmt::check_prefix;
use crate::nanoformer::NanoModel;

pub const EVEC_MAGIC: &[u8; 4] = b"EVEC";
pub const EVEC_VERSION: u32 = 1;
pub const EVEC_EXTENSION: &str = "evec";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    emotion: String,
    model_id: String,
    #[serde(rename = "L")]
    layers: usize,
    d: usize,
    n_queries: u32,
    created_unix: u64,
}

pub fn encode(ev: &EmotionVector) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        emotion: ev.emotion().to_string(),
        model_id: ev.model_id().to_string(),
        layers: ev.num_layers(),
        d: ev.width(),
        n_queries: ev.n_queries(),
        created_unix: ev.created_unix(),
    })
    .expect("header serializes");
    let mut buf = Vec::with_capacity(12 + header.len() + 4 * ev.num_layers() * ev.width());
    buf.extend_from_slice(EVEC_MAGIC);
    buf.extend_from_slice(&EVEC_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for x in ev.layers().iter().flatten() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf
}

pub fn decode(bytes: &[u8]) -> Result<EmotionVector> {
    let (header, pos) = check_prefix(bytes, EVEC_MAGIC, EVEC_VERSION)?;
    let h: Header =
        serde_json::from_slice(&header).map_err(|e| Error::Decode { offset: 12, reason: format!("header: {e}") })?;
    let expected = h.layers * h.d * 4;
    let payload = &bytes[pos..];
    if payload.len() != expected {
        return Err(Error::Decode {
            offset: pos + payload.len().min(expected),
            reason: format!("payload is {} bytes, header implies {expected}", payload.len()),
        });
    }
    let values: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let layers = values.chunks(h.d.max(1)).map(<[f32]>::to_vec).collect();
    Ok(EmotionVector::new(h.emotion, layers, h.model_id, h.n_queries)?.with_created_unix(h.created_unix))
}

pub fn save_ev(ev: &EmotionVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(ev)).map_err(|e| Error::io(path, e))
}

pub fn load_ev(path: impl AsRef<Path>) -> Result<EmotionVector> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Load and check that `L` and `d` match `model`.
pub fn load_ev_for(path: impl AsRef<Path>, model: &NanoModel) -> Result<EmotionVector> {
    let ev = load_ev(path)?;
    check_against(&ev, model)?;
    Ok(ev)
}

pub fn check_against(ev: &EmotionVector, model: &NanoModel) -> Result<()> {
    if ev.num_layers() != model.num_layers() || ev.width() != model.width() {
        return Err(Error::Dimension(format!(
            "emotion vector {} is {}x{}, model is {}x{}",
            ev.emotion(),
            ev.num_layers(),
            ev.width(),
            model.num_layers(),
            model.width()
        )));
    }
    Ok(())
}

/// Write every member plus `base.evec` into `dir`.
pub fn save_set(set: &EvSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (label, ev) in set.members() {
        save_ev(ev, dir.join(format!("{label}.{EVEC_EXTENSION}")))?;
    }
    save_ev(set.base(), dir.join(format!("{BASE_LABEL}.{EVEC_EXTENSION}")))
}

/// Load a set directory; the base vector is recomputed from the members.
pub fn load_set(dir: impl AsRef<Path>) -> Result<EvSet> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == EVEC_EXTENSION))
        .filter(|p| p.file_stem().is_some_and(|s| s != BASE_LABEL))
        .collect();
    paths.sort();
    let members = paths.iter().map(load_ev).collect::<Result<Vec<_>>>()?;
    EvSet::new(members)
}
