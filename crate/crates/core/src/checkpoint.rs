//! Model and optimizer persistence: a safetensors weight file plus a JSON
//! sidecar (`<stem>.meta.json`) with the configuration needed to rebuild it.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{ParamStore, Tensor};
use crate::model::{ModelConfig, TpgModel, Variant};
use crate::objective::{AdamState, TrainingConfig};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub variant: Variant,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    /// Epochs completed.
    pub epoch: usize,
    pub seed: u64,
    /// Identifies the training data, typically a hash of the manifest.
    pub data_fingerprint: String,
    /// Lowest epoch-mean total loss seen so far.
    pub best_total: Option<f64>,
    pub adam_step: Option<u64>,
    /// SHA-256 of the weight file, filled in by [`save_checkpoint`].
    #[serde(default)]
    pub weights_sha256: String,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: TpgModel<f32>,
    pub optimizer: Option<AdamState<f32>>,
    pub meta: CheckpointMeta,
}

/// `dir/name.safetensors` gets `dir/name.meta.json`.
pub fn meta_path(weights: &Path) -> PathBuf {
    weights.with_extension("meta.json")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex SHA-256 of a file's contents.
pub fn file_fingerprint(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn ckpt_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn to_bytes(t: &Tensor<f32>) -> Vec<u8> {
    t.data().iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes weights (and optimizer moments, if given) to `path` and the
/// sidecar next to it. Returns the stored metadata.
pub fn save_checkpoint(
    path: &Path,
    model: &TpgModel<f32>,
    optimizer: Option<&AdamState<f32>>,
    meta: &CheckpointMeta,
) -> Result<CheckpointMeta> {
    if meta.variant != model.variant() || &meta.model != model.config() {
        return Err(ckpt_err(path, "metadata does not describe the model being saved"));
    }
    let mut buffers: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    for (name, t) in model.params().iter() {
        buffers.push((format!("param.{name}"), t.shape().to_vec(), to_bytes(t)));
    }
    if let Some(opt) = optimizer {
        if !opt.matches(model.params()) {
            return Err(ckpt_err(path, "optimizer state does not match the model"));
        }
        for ((name, _), (m, v)) in model.params().iter().zip(opt.m.iter().zip(&opt.v)) {
            buffers.push((format!("adam_m.{name}"), m.shape().to_vec(), to_bytes(m)));
            buffers.push((format!("adam_v.{name}"), v.shape().to_vec(), to_bytes(v)));
        }
    }
    let views = buffers
        .iter()
        .map(|(n, s, b)| Ok((n.clone(), TensorView::new(Dtype::F32, s.clone(), b)?)))
        .collect::<std::result::Result<Vec<_>, safetensors::SafeTensorError>>()
        .map_err(|e| ckpt_err(path, e.to_string()))?;
    let info = HashMap::from([("format".to_string(), "tpg".to_string())]);
    let bytes = safetensors::serialize(views, Some(info)).map_err(|e| ckpt_err(path, e.to_string()))?;

    let mut stored = meta.clone();
    stored.format_version = FORMAT_VERSION;
    stored.adam_step = optimizer.map(|o| o.step);
    stored.weights_sha256 = sha256_hex(&bytes);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_atomic(path, &bytes)?;
    let json = serde_json::to_vec_pretty(&stored).expect("metadata serializes");
    write_atomic(&meta_path(path), &json)?;
    Ok(stored)
}

pub fn load_meta(path: &Path) -> Result<CheckpointMeta> {
    let mp = meta_path(path);
    let bytes = std::fs::read(&mp).map_err(|e| Error::io(&mp, e))?;
    let meta: CheckpointMeta = serde_json::from_slice(&bytes).map_err(|e| ckpt_err(&mp, e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(ckpt_err(
            &mp,
            format!("format version {} is not supported", meta.format_version),
        ));
    }
    Ok(meta)
}

fn read_tensor(st: &SafeTensors<'_>, path: &Path, name: &str, like: &Tensor<f32>) -> Result<Tensor<f32>> {
    let view = st
        .tensor(name)
        .map_err(|_| ckpt_err(path, format!("missing tensor {name}")))?;
    if view.dtype() != Dtype::F32 || view.shape() != like.shape() {
        return Err(ckpt_err(
            path,
            format!(
                "tensor {name} is {:?} {:?}, expected F32 {:?}",
                view.dtype(),
                view.shape(),
                like.shape()
            ),
        ));
    }
    let data = view
        .data()
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Tensor::from_vec(like.shape(), data))
}

/// Loads a checkpoint written by [`save_checkpoint`], verifying the weight
/// file against the checksum in its sidecar.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let meta = load_meta(path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if sha256_hex(&bytes) != meta.weights_sha256 {
        return Err(ckpt_err(path, "weight file does not match the checksum in its metadata"));
    }
    let st = SafeTensors::deserialize(&bytes).map_err(|e| ckpt_err(path, e.to_string()))?;
    let mut model = TpgModel::<f32>::new(meta.model.clone(), meta.variant, 0)
        .map_err(|e| ckpt_err(path, format!("invalid model config: {e}")))?;
    let template: ParamStore<f32> = model.params().clone();
    for (id, (name, like)) in template.ids().zip(template.iter()) {
        *model.params_mut().get_mut(id) = read_tensor(&st, path, &format!("param.{name}"), like)?;
    }
    let optimizer = match meta.adam_step {
        None => None,
        Some(step) => {
            let mut opt = AdamState::new(&template);
            for (k, (name, like)) in template.iter().enumerate() {
                opt.m[k] = read_tensor(&st, path, &format!("adam_m.{name}"), like)?;
                opt.v[k] = read_tensor(&st, path, &format!("adam_v.{name}"), like)?;
            }
            opt.step = step;
            Some(opt)
        }
    };
    Ok(Checkpoint { model, optimizer, meta })
}
