//! Versioned model checkpoints.
//!
//! A checkpoint is one JSON document carrying the model variant, its
//! configuration, the normalization spec, the split recipe, and a flat
//! `path -> shape -> values` parameter table. Values round-trip exactly
//! (shortest-representation float encoding). Writes go through a
//! sibling temp file and a rename, so a failed save leaves no partial
//! checkpoint.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::NormalizationSpec;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams, ModelVariant};
use crate::nn::ParamVisit;
use crate::numerics::Tensor;
use crate::seed::stream_rng;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub fractions: (f64, f64, f64),
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    path: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    variant: ModelVariant,
    config: ModelConfig,
    normalization: NormalizationSpec,
    split: SplitSpec,
    params: Vec<ParamEntry>,
}

pub struct Checkpoint {
    pub variant: ModelVariant,
    pub config: ModelConfig,
    pub normalization: NormalizationSpec,
    pub split: SplitSpec,
    pub params: ModelParams,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut entries = Vec::new();
    ckpt.params.visit("", &mut |p, t| {
        entries.push(ParamEntry {
            path: p.to_string(),
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        });
    });
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        variant: ckpt.variant,
        config: ckpt.config,
        normalization: ckpt.normalization.clone(),
        split: ckpt.split,
        params: entries,
    };
    let bytes = serde_json::to_vec(&file)?;
    write_atomic(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let file: CheckpointFile = serde_json::from_slice(&bytes)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint version {} (expected {})",
            file.version, CHECKPOINT_VERSION
        )));
    }
    file.normalization.validate()?;

    let mut by_path: std::collections::HashMap<String, ParamEntry> =
        file.params.into_iter().map(|e| (e.path.clone(), e)).collect();

    // shape the skeleton from the stored config, then fill it
    let mut rng = stream_rng(0, "checkpoint-skeleton");
    let mut params = ModelParams::init(&file.config, &mut rng)?;
    let mut err: Option<Error> = None;
    params.visit_mut("", &mut |p, t| {
        if err.is_some() {
            return;
        }
        match by_path.remove(p) {
            Some(entry) => {
                if entry.shape != t.shape() {
                    err = Some(Error::CheckpointMismatch(format!(
                        "parameter {p}: stored shape {:?} vs expected {:?}",
                        entry.shape,
                        t.shape()
                    )));
                    return;
                }
                match Tensor::new(entry.shape, entry.data) {
                    Ok(tensor) => *t = tensor,
                    Err(e) => err = Some(e),
                }
            }
            None => err = Some(Error::CheckpointMismatch(format!("parameter {p} missing"))),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if let Some(extra) = by_path.keys().next() {
        return Err(Error::CheckpointMismatch(format!(
            "unexpected parameter {extra} in checkpoint"
        )));
    }
    params.check_config(&file.config)?;

    Ok(Checkpoint {
        variant: file.variant,
        config: file.config,
        normalization: file.normalization,
        split: file.split,
        params,
    })
}

/// Write via sibling temp file + rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
