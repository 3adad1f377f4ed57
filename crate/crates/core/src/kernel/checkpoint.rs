//! Single-file model checkpoints.
//!
//! Layout: 8 magic bytes `PFTCKPT1`, a little-endian `u32` header length, a
//! JSON header (dims, task list, seed, config hash), then every parameter as a
//! little-endian `f64` in [`ModelState::tensors`] order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::linalg::{Matrix, Vector};
use super::model::{EncoderParams, HeadParams, ModelState, TaskId};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PFTCKPT1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    input_dim: usize,
    hidden_dim: usize,
    tasks: Vec<(TaskId, usize)>,
    seed: u64,
    config_hash: String,
    param_count: usize,
}

pub fn encode_checkpoint(model: &ModelState, meta: &CheckpointMeta) -> Vec<u8> {
    let header = Header {
        input_dim: model.input_dim(),
        hidden_dim: model.hidden_dim(),
        tasks: model.heads().map(|h| (h.task.clone(), h.n_labels())).collect(),
        seed: meta.seed,
        config_hash: meta.config_hash.clone(),
        param_count: model.num_params(),
    };
    let header = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(12 + header.len() + 8 * model.num_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, tensor) in model.tensors() {
        for v in tensor {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<(ModelState, CheckpointMeta)> {
    let bad = |reason: String| Error::format("checkpoint", path, reason);
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing checkpoint magic".into()));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes
        .get(12..12 + header_len)
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(format!("header: {e}")))?;
    let payload = &bytes[12 + header_len..];
    if payload.len() != header.param_count * 8 {
        return Err(bad(format!(
            "expected {} parameters, found {} bytes",
            header.param_count,
            payload.len()
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };

    let (input, hidden) = (header.input_dim, header.hidden_dim);
    let w1 = Matrix::new(hidden, input, take(hidden * input))?;
    let b1 = Vector::new(take(hidden))?;
    let mut model = ModelState::new(EncoderParams::new(w1, b1)?);
    for (task, n) in &header.tasks {
        let w = Matrix::new(*n, hidden, take(n * hidden))?;
        let b = Vector::new(take(*n))?;
        model.insert_head(HeadParams::new(task.clone(), w, b)?)?;
    }
    if model.num_params() != header.param_count {
        return Err(bad("parameter count does not match declared shapes".into()));
    }
    Ok((
        model,
        CheckpointMeta {
            seed: header.seed,
            config_hash: header.config_hash,
        },
    ))
}

/// Writes through a temporary sibling and renames, so a crash never leaves a
/// half-written checkpoint under the final name.
pub fn write_checkpoint(path: &Path, model: &ModelState, meta: &CheckpointMeta) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode_checkpoint(model, meta)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(ModelState, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
