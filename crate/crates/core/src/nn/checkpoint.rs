//! Versioned binary checkpoint: magic, version, JSON header, named tensors.
//!
//! Layout: `ATCLCKPT` | u32 version | u64 header length | header JSON |
//! every tensor's values as little-endian f64, in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss::LossVariant;
use super::model::{Model, ModelConfig};
use super::train::{Category, Checkpoint, ValScores};
use crate::align::NormStats;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ATCLCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    norm: NormStats,
    variant: LossVariant,
    epoch: usize,
    tags: Vec<Category>,
    val: ValScores,
    tensors: Vec<TensorEntry>,
}

pub fn to_bytes(ck: &Checkpoint) -> Result<Vec<u8>> {
    let model = Model::new(&ck.config)?;
    if ck.params.len() != model.n_params() {
        return Err(Error::SchemaMismatch("checkpoint parameters do not fit its configuration".into()));
    }
    let header = Header {
        config: ck.config.clone(),
        norm: ck.norm.clone(),
        variant: ck.variant,
        epoch: ck.epoch,
        tags: ck.tags.clone(),
        val: ck.val,
        tensors: model.layout.specs.iter().map(|s| TensorEntry { name: s.name.clone(), shape: s.shape.clone() }).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + json.len() + 8 * ck.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for spec in &model.layout.specs {
        out.extend(crate::io::f64s_to_le_bytes(&ck.params[spec.offset..spec.offset + spec.len()]));
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Checkpoint> {
    let bad = |m: &str| Error::Format { path: origin.to_owned(), msg: m.to_owned() };
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..).ok_or_else(|| bad("truncated"))?;
    if body.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(&e.to_string()))?;
    let model = Model::new(&header.config)?;
    let expected: Vec<TensorEntry> =
        model.layout.specs.iter().map(|s| TensorEntry { name: s.name.clone(), shape: s.shape.clone() }).collect();
    if header.tensors != expected {
        return Err(Error::SchemaMismatch(format!("{origin}: tensor table does not match the configuration")));
    }
    let params = crate::io::f64s_from_le_bytes(&body[hlen..])?;
    if params.len() != model.n_params() {
        return Err(bad("parameter payload has the wrong length"));
    }
    Ok(Checkpoint {
        config: header.config,
        norm: header.norm,
        variant: header.variant,
        epoch: header.epoch,
        tags: header.tags,
        val: header.val,
        params,
    })
}

pub fn write_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    let bytes = to_bytes(ck)?;
    crate::io::write_atomic(path, |w| Ok(std::io::Write::write_all(w, &bytes)?))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    from_bytes(&std::fs::read(path)?, &path.display().to_string())
}
