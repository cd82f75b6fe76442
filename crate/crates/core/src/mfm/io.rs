//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "SRMFM001"
//! header_len u64 LE
//! header     JSON: config, vocabulary, mu, neighbor table, rating stats,
//!            provenance, parameter count and an optional artifact stamp
//! params     header.params x f64 LE, in layout order
//! ```
//!
//! The layout is recomputed from the config and vocabulary on load. Floats in
//! the header use shortest round-trip formatting, so decoding is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{MfmModel, Provenance, RatingStats, Vocab};
use super::neighbors::NeighborTable;
use super::MfmConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SRMFM001";

#[derive(Serialize, Deserialize)]
struct Header {
    config: MfmConfig,
    vocab: Vocab,
    mu: f64,
    neighbors: NeighborTable,
    ratings: RatingStats,
    provenance: Option<Provenance>,
    params: usize,
    stamp: Option<String>,
}

pub fn encode_model(model: &MfmModel, stamp: Option<&str>) -> Vec<u8> {
    let header = Header {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        mu: model.mu,
        neighbors: model.neighbors.clone(),
        ratings: model.ratings.clone(),
        provenance: model.provenance,
        params: model.params.len(),
        stamp: stamp.map(str::to_string),
    };
    let json = serde_json::to_vec(&header).expect("model header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + model.params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<(MfmModel, Option<String>)> {
    let bad = |m: &str| Error::ModelFormat(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a model checkpoint"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < len {
        return Err(bad("truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&body[..len]).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let raw = &body[len..];
    if raw.len() != header.params * 8 {
        return Err(bad("parameter block size mismatch"));
    }
    let params: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let layout = MfmModel::layout_for(&header.config, &header.vocab);
    if layout.total() != params.len() {
        return Err(bad("parameter count does not match the configured layout"));
    }
    let model = MfmModel {
        config: header.config,
        vocab: header.vocab,
        layout,
        params,
        mu: header.mu,
        neighbors: header.neighbors,
        ratings: header.ratings,
        provenance: header.provenance,
    };
    Ok((model, header.stamp))
}

pub fn write_model(model: &MfmModel, path: &Path, stamp: Option<&str>) -> Result<()> {
    fs::write(path, encode_model(model, stamp)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<(MfmModel, Option<String>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
