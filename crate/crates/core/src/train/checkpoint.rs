//! Checkpoint file format.
//!
//! Layout: magic bytes `LHWN`, a little-endian u32 format version (1), a
//! little-endian u64 byte length followed by that many bytes of UTF-8
//! JSON (config, optimizer scalars, rng state, epoch counter, and the
//! tensor manifest with per-tensor name/shape/byte-offset), then the raw
//! little-endian f64 blobs concatenated in manifest order. Offsets are
//! relative to the start of the blob section. Save -> load -> save is
//! byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ListenerHeadModel, ModelConfig, ParamLayout};
use crate::rng::DetRng;
use crate::tensor::Tensor;

use super::optimizer::{OptimizerConfig, OptimizerState};

pub const MAGIC: [u8; 4] = *b"LHWN";
pub const VERSION: u32 = 1;

/// Full training state captured by a checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ListenerHeadModel,
    pub optimizer: OptimizerState,
    pub rng: DetRng,
    pub epoch: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerMeta {
    algorithm: String,
    step: u64,
    #[serde(flatten)]
    config: OptimizerConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    optimizer: OptimizerMeta,
    rng_state: u64,
    epoch: u64,
    manifest: Vec<ManifestEntry>,
}

/// Blob order: learnable parameters (layout order), the two feature
/// normalization buffers, then Adam first and second moments.
fn tensor_names(layout: &ParamLayout) -> Vec<String> {
    let mut names: Vec<String> = layout
        .specs()
        .iter()
        .map(|s| format!("param.{}", s.name))
        .collect();
    names.push("buffer.feature_mean".to_string());
    names.push("buffer.feature_std".to_string());
    for s in layout.specs() {
        names.push(format!("optim.m.{}", s.name));
    }
    for s in layout.specs() {
        names.push(format!("optim.v.{}", s.name));
    }
    names
}

fn tensors_of(ckpt: &Checkpoint) -> Vec<&Tensor> {
    let mut out: Vec<&Tensor> = ckpt.model.params().iter().collect();
    out.push(&ckpt.model.feature_mean);
    out.push(&ckpt.model.feature_std);
    out.extend(ckpt.optimizer.m.iter());
    out.extend(ckpt.optimizer.v.iter());
    out
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let names = tensor_names(&ckpt.model.layout);
    let tensors = tensors_of(ckpt);
    debug_assert_eq!(names.len(), tensors.len());

    let mut manifest = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, t) in names.iter().zip(&tensors) {
        manifest.push(ManifestEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += (t.len() * 8) as u64;
    }

    let header = Header {
        config: ckpt.model.config.clone(),
        optimizer: OptimizerMeta {
            algorithm: "adam".to_string(),
            step: ckpt.optimizer.step,
            config: ckpt.optimizer.config,
        },
        rng_state: ckpt.rng.state(),
        epoch: ckpt.epoch,
        manifest,
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::data(format!("checkpoint: header encoding failed: {e}")))?;

    let mut out = Vec::with_capacity(12 + header_json.len() + offset as usize);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || bytes[0..4] != MAGIC {
        return Err(Error::data("not a checkpoint (bad magic bytes)".to_string()));
    }
    if bytes.len() < 8 {
        return Err(Error::data("checkpoint: truncated file".to_string()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::data(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    if bytes.len() < 16 {
        return Err(Error::data("checkpoint: truncated file".to_string()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let blob_start = 16 + header_len;
    if bytes.len() < blob_start {
        return Err(Error::data("checkpoint: truncated file".to_string()));
    }
    let header: Header = serde_json::from_slice(&bytes[16..blob_start])
        .map_err(|e| Error::data(format!("checkpoint: malformed header: {e}")))?;
    if header.optimizer.algorithm != "adam" {
        return Err(Error::data(format!(
            "checkpoint: unknown optimizer algorithm {:?}",
            header.optimizer.algorithm
        )));
    }
    header.config.validate()?;

    // The manifest must describe exactly the tensors this config implies.
    let layout = ParamLayout::build(&header.config);
    let expected = tensor_names(&layout);
    if header.manifest.len() != expected.len() {
        return Err(Error::data(format!(
            "checkpoint: manifest has {} tensors, config implies {}",
            header.manifest.len(),
            expected.len()
        )));
    }

    let blob = &bytes[blob_start..];
    let mut tensors = Vec::with_capacity(header.manifest.len());
    let mut expected_offset = 0u64;
    for (entry, name) in header.manifest.iter().zip(&expected) {
        if &entry.name != name {
            return Err(Error::data(format!(
                "checkpoint: manifest entry {:?} where {name:?} was expected",
                entry.name
            )));
        }
        if entry.offset != expected_offset {
            return Err(Error::data(format!(
                "checkpoint: manifest/blob mismatch: {} at offset {} (expected {})",
                entry.name, entry.offset, expected_offset
            )));
        }
        let n: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + n * 8;
        if end > blob.len() {
            return Err(Error::data(format!(
                "checkpoint: manifest/blob mismatch: {} extends past blob end",
                entry.name
            )));
        }
        let data: Vec<f64> = blob[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "checkpoint: non-finite value in tensor {}",
                entry.name
            )));
        }
        tensors.push(Tensor::from_raw(entry.shape.clone(), data));
        expected_offset = end as u64;
    }
    if expected_offset as usize != blob.len() {
        return Err(Error::data(format!(
            "checkpoint: manifest/blob mismatch: blob has {} bytes, manifest describes {}",
            blob.len(),
            expected_offset
        )));
    }

    let n_params = layout.specs().len();
    let mut iter = tensors.into_iter();
    let params: Vec<Tensor> = iter.by_ref().take(n_params).collect();
    let feature_mean = iter.next().expect("manifest length checked");
    let feature_std = iter.next().expect("manifest length checked");
    let m: Vec<Tensor> = iter.by_ref().take(n_params).collect();
    let v: Vec<Tensor> = iter.collect();

    let model =
        ListenerHeadModel::from_parts(header.config, params, feature_mean, feature_std)?;
    let optimizer = OptimizerState {
        config: header.optimizer.config,
        step: header.optimizer.step,
        m,
        v,
    };
    Ok(Checkpoint {
        model,
        optimizer,
        rng: DetRng::from_state(header.rng_state),
        epoch: header.epoch,
    })
}

/// Atomic save: write to a temp file in the same directory, then rename.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, &bytes)
        .map_err(|e| Error::data(format!("checkpoint: cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| Error::data(format!("checkpoint: cannot rename into {}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)
        .map_err(|e| Error::data(format!("checkpoint: cannot read {}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}
