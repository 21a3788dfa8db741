//! Binary checkpoint layout:
//!
//! ```text
//! b"BFT1"
//! u64 LE   metadata length n
//! n bytes  metadata JSON
//! f64 LE   every parameter entry, parameters in declaration order, row-major
//! u32 LE   CRC-32 of all preceding bytes
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::bayes::BayesConfig;
use crate::model::{Model, ModelConfig};
use crate::scalar::Scalar;
use crate::textpipe::{PipelineConfig, Vocabulary};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BFT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    /// Precision the model was trained in; stored values are always f64.
    pub scalar: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub bayes: BayesConfig,
    pub pipeline: PipelineConfig,
    pub vocab_size: usize,
    /// SHA-256 of the vocabulary export.
    pub vocab_hash: String,
    /// Vocabulary file name, relative to the checkpoint's directory.
    pub vocab_file: String,
    pub params: Vec<(String, (usize, usize))>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub meta: CheckpointMeta,
    pub model: Model<T>,
}

pub fn save_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    model: &Model<T>,
    vocab: &Vocabulary,
    pipeline: &PipelineConfig,
    train: &TrainConfig,
    bayes: &BayesConfig,
    vocab_file: &str,
) -> Result<CheckpointMeta, TrainError> {
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        scalar: T::NAME.to_string(),
        model: model.config().clone(),
        train: train.clone(),
        bayes: bayes.clone(),
        pipeline: pipeline.clone(),
        vocab_size: vocab.len(),
        vocab_hash: vocab.content_hash(),
        vocab_file: vocab_file.to_string(),
        params: model.shapes(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| TrainError::Metadata(e.to_string()))?;
    let mut bytes = Vec::with_capacity(16 + json.len() + 8 * model.params.numel());
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for (_, p) in model.params.iter() {
        for &x in p.value.data() {
            bytes.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, bytes)?;
    Ok(meta)
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>, TrainError> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(TrainError::MissingFile(path.display().to_string()));
    }
    let bytes = std::fs::read(path)?;
    if bytes.len() >= 4 && &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(TrainError::VersionMismatch {
            expected: format!("magic {:?}", String::from_utf8_lossy(CHECKPOINT_MAGIC)),
            found: format!("magic {:?}", String::from_utf8_lossy(&bytes[..4])),
        });
    }
    if bytes.len() < 16 {
        return Err(TrainError::CorruptChecksum);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("four bytes"));
    if crc32fast::hash(body) != stored {
        return Err(TrainError::CorruptChecksum);
    }
    let meta_len = u64::from_le_bytes(body[4..12].try_into().expect("eight bytes")) as usize;
    let meta_end = 12usize
        .checked_add(meta_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| TrainError::Metadata("metadata length exceeds file".into()))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&body[12..meta_end]).map_err(|e| TrainError::Metadata(e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(TrainError::VersionMismatch {
            expected: format!("format version {FORMAT_VERSION}"),
            found: format!("format version {}", meta.format_version),
        });
    }

    let mut model = Model::<T>::new(meta.model.clone(), meta.vocab_size, &meta.bayes, 0)?;
    check_shapes(&model.shapes(), &meta.params)?;
    let data = &body[meta_end..];
    if data.len() != 8 * model.params.numel() {
        return Err(TrainError::Metadata(format!(
            "expected {} parameter bytes, found {}",
            8 * model.params.numel(),
            data.len()
        )));
    }
    let mut values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")));
    for p in model.params.iter_mut() {
        for x in p.value.data_mut() {
            *x = T::of(values.next().expect("length checked"));
        }
    }
    Ok(Checkpoint { meta, model })
}

/// Loads a checkpoint and requires it to match the architecture implied by
/// `config`, `vocab_size` and `bayes`.
pub fn load_checkpoint_expecting<T: Scalar>(
    path: impl AsRef<Path>,
    config: &ModelConfig,
    vocab_size: usize,
    bayes: &BayesConfig,
) -> Result<Checkpoint<T>, TrainError> {
    let ckpt = load_checkpoint::<T>(path)?;
    let expected = Model::<T>::new(config.clone(), vocab_size, bayes, 0)?;
    check_shapes(&expected.shapes(), &ckpt.meta.params)?;
    Ok(ckpt)
}

fn check_shapes(expected: &[(String, (usize, usize))], found: &[(String, (usize, usize))]) -> Result<(), TrainError> {
    if expected == found {
        return Ok(());
    }
    let show = |(n, (r, c)): &(String, (usize, usize))| format!("{n} {r}x{c}");
    let first = expected.iter().zip(found).position(|(a, b)| a != b);
    let (expected, found) = match first {
        Some(i) => (show(&expected[i]), show(&found[i])),
        None => (
            format!("{} parameter tensors", expected.len()),
            format!("{} parameter tensors", found.len()),
        ),
    };
    Err(TrainError::VersionMismatch { expected, found })
}
