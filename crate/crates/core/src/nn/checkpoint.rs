//! Checkpoint directories.
//!
//! ```text
//! <dir>/checkpoint.json   metadata record + tensor index (name, byte offset, byte length)
//! <dir>/params.bin        concatenated XMF1 tensors in parameter registration order
//! ```
//!
//! Parameter names are dotted paths such as `fusion.cross_attn.q_proj.weight`
//! or `text_encoder.blocks.0.ln1.gain`; they are stable across releases.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::{tensor_from_bytes, tensor_to_bytes, Scalar};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PARAMS_FILE: &str = "params.bin";
const FORMAT: &str = "xmodal-checkpoint-v1";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    offset: u64,
    len: u64,
    trainable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Index<M> {
    format: String,
    dtype: String,
    metadata: M,
    tensors: Vec<TensorEntry>,
}

pub fn save_params<T: Scalar, M: Serialize>(dir: &Path, metadata: &M, store: &ParamStore<T>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::new();
    let mut tensors = Vec::with_capacity(store.len());
    for (_, p) in store.iter() {
        let bytes = tensor_to_bytes(&p.tensor);
        tensors.push(TensorEntry {
            name: p.name.clone(),
            offset: blob.len() as u64,
            len: bytes.len() as u64,
            trainable: p.tensor.requires_grad(),
        });
        blob.extend_from_slice(&bytes);
    }
    let index = Index {
        format: FORMAT.to_string(),
        dtype: T::DTYPE.name().to_string(),
        metadata,
        tensors,
    };
    let json = serde_json::to_string_pretty(&index).map_err(|e| Error::json("checkpoint index", e))?;
    let params_path = dir.join(PARAMS_FILE);
    fs::write(&params_path, blob).map_err(|e| Error::io(&params_path, e))?;
    let index_path = dir.join(CHECKPOINT_FILE);
    fs::write(&index_path, json + "\n").map_err(|e| Error::io(&index_path, e))
}

pub fn load_metadata<M: DeserializeOwned>(dir: &Path) -> Result<M> {
    let index: Index<M> = read_index(dir)?;
    Ok(index.metadata)
}

fn read_index<M: DeserializeOwned>(dir: &Path) -> Result<Index<M>> {
    let path = dir.join(CHECKPOINT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: Index<M> = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
    if index.format != FORMAT {
        return Err(Error::Corrupt(format!("unsupported checkpoint format {:?}", index.format)));
    }
    Ok(index)
}

pub fn load_params<T: Scalar, M: DeserializeOwned>(dir: &Path) -> Result<(M, ParamStore<T>)> {
    let index: Index<M> = read_index(dir)?;
    if index.dtype != T::DTYPE.name() {
        return Err(Error::Dtype {
            expected: T::DTYPE.name(),
            found: if index.dtype == "f64" { "f64" } else { "f32" },
        });
    }
    let path = dir.join(PARAMS_FILE);
    let blob = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let mut store = ParamStore::new();
    for e in index.tensors {
        let end = e.offset.checked_add(e.len).filter(|end| *end <= blob.len() as u64).ok_or_else(|| {
            Error::Corrupt(format!(
                "tensor {} at offset {} (+{}) exceeds {} bytes of {}",
                e.name,
                e.offset,
                e.len,
                blob.len(),
                PARAMS_FILE
            ))
        })?;
        let t = tensor_from_bytes::<T>(&blob[e.offset as usize..end as usize])?;
        store.add(e.name, t, e.trainable)?;
    }
    Ok((index.metadata, store))
}
