//! Versioned binary checkpoint container.
//!
//! Layout: magic `TVCK`, format version, a length-prefixed JSON metadata
//! block (config echo, vocabulary hashes, counters), then every parameter
//! tensor by hierarchical name with its shape and little-endian `f64`
//! payload. Loading rejects magic/version mismatches, vocabulary-hash
//! mismatches, and any missing or misshapen tensor. Writing is fully
//! deterministic, so save→load→save produces byte-identical files.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, ModelConfig};
use crate::nn::Tensor;
use crate::trainer::{TrainConfig, TrainState};

const MAGIC: &[u8; 4] = b"TVCK";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("vocabulary hash mismatch for the {0} vocabulary")]
    VocabHashMismatch(&'static str),
    #[error("missing or unknown tensor {0}")]
    MissingTensor(String),
    #[error("tensor {name} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch { name: String, expected: (usize, usize), got: (usize, usize) },
}

/// Everything stored alongside the tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sent_vocab_hash: String,
    pub tree_vocab_hash: String,
    pub step: u64,
    pub epoch: usize,
    pub best_val_elbo: Option<f64>,
    pub seed: u64,
}

pub struct Loaded {
    pub state: TrainState,
    pub meta: CheckpointMeta,
}

pub fn save(
    path: &Path,
    state: &TrainState,
    train: &TrainConfig,
    sent_vocab_hash: &str,
    tree_vocab_hash: &str,
) -> io::Result<()> {
    let meta = CheckpointMeta {
        model: state.model.config.clone(),
        train: train.clone(),
        sent_vocab_hash: sent_vocab_hash.to_string(),
        tree_vocab_hash: tree_vocab_hash.to_string(),
        step: state.step,
        epoch: state.epoch,
        best_val_elbo: state.best_val_elbo,
        seed: state.seed,
    };
    let meta_bytes = serde_json::to_vec(&meta)?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta_bytes);

    let params = &state.model.params;
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for idx in 0..params.len() {
        let name = params.name(idx).as_bytes();
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name);
        let (rows, cols, data): (u64, u64, &[f64]) = match params.tensor(idx) {
            Tensor::M(m) => (m.nrows() as u64, m.ncols() as u64, m.as_slice().unwrap()),
            Tensor::V(v) => (v.len() as u64, u64::MAX, v.as_slice().unwrap()),
        };
        out.extend_from_slice(&rows.to_le_bytes());
        out.extend_from_slice(&cols.to_le_bytes());
        for x in data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, out)
}

/// Load a checkpoint, verifying vocabulary hashes when provided.
pub fn load(
    path: &Path,
    expected_hashes: Option<(&str, &str)>,
) -> Result<Loaded, CheckpointError> {
    let mut file = io::BufReader::new(fs::File::open(path)?);

    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut file)?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let meta_len = read_u64(&mut file)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    file.read_exact(&mut meta_bytes)?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;

    if let Some((sent, tree)) = expected_hashes {
        if meta.sent_vocab_hash != sent {
            return Err(CheckpointError::VocabHashMismatch("sentence"));
        }
        if meta.tree_vocab_hash != tree {
            return Err(CheckpointError::VocabHashMismatch("tree"));
        }
    }

    // Rebuild the layout from the config echo, then fill tensors by name.
    let mut model = Model::new(meta.model.clone(), meta.seed);
    let count = read_u64(&mut file)? as usize;
    let mut filled = vec![false; model.params.len()];
    for _ in 0..count {
        let name_len = read_u64(&mut file)? as usize;
        let mut name = vec![0u8; name_len];
        file.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        let rows = read_u64(&mut file)? as usize;
        let cols_raw = read_u64(&mut file)?;
        let is_vector = cols_raw == u64::MAX;
        let cols = if is_vector { 1 } else { cols_raw as usize };
        let n = rows * cols;
        let mut data = vec![0f64; n];
        for x in data.iter_mut() {
            let mut buf = [0u8; 8];
            file.read_exact(&mut buf)?;
            *x = f64::from_le_bytes(buf);
        }

        let id = model
            .params
            .id_of(&name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.clone()))?;
        let slot = model.params.tensor_mut(id.0);
        match (slot, is_vector) {
            (Tensor::M(m), false) => {
                if m.dim() != (rows, cols) {
                    return Err(CheckpointError::ShapeMismatch {
                        name,
                        expected: m.dim(),
                        got: (rows, cols),
                    });
                }
                m.as_slice_mut().unwrap().copy_from_slice(&data);
            }
            (Tensor::V(v), true) => {
                if v.len() != rows {
                    return Err(CheckpointError::ShapeMismatch {
                        name,
                        expected: (v.len(), 1),
                        got: (rows, 1),
                    });
                }
                v.as_slice_mut().unwrap().copy_from_slice(&data);
            }
            _ => {
                return Err(CheckpointError::Corrupt(format!(
                    "tensor {name} kind does not match the layout"
                )))
            }
        }
        filled[id.0] = true;
    }
    if let Some(idx) = filled.iter().position(|f| !f) {
        return Err(CheckpointError::MissingTensor(model.params.name(idx).to_string()));
    }

    let state = TrainState {
        model,
        step: meta.step,
        epoch: meta.epoch,
        best_val_elbo: meta.best_val_elbo,
        seed: meta.seed,
    };
    Ok(Loaded { state, meta })
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Convenience used by benches and smoke tests to dump raw bytes.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)
}
