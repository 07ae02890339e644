//! Self-describing binary checkpoint.
//!
//! Layout: the 8-byte magic `TIDSITCK`, a little-endian `u32` format version,
//! a `u32` header length, a JSON header (model config, normalization stats,
//! training config, run metadata, and the parameter index), then every
//! parameter's values as raw little-endian `f64` in index order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::data::NormalizationStats;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numerics::{ParamSet, Tensor};
use crate::training::TrainConfig;

pub const MAGIC: &[u8; 8] = b"TIDSITCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Epoch (1-based) whose parameters are stored; 0 before any training.
    pub epoch: usize,
    pub epochs_completed: usize,
    pub best_val_rmse: Option<f64>,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub stats: NormalizationStats,
    pub train_config: TrainConfig,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    path: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model_config: ModelConfig,
    stats: NormalizationStats,
    train_config: TrainConfig,
    meta: CheckpointMeta,
    params: Vec<IndexEntry>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(bad(format!("truncated while reading {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn read_u32(bytes: &mut &[u8], what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, 4, what)?.try_into().unwrap()))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model_config: self.model.config.clone(),
            stats: self.stats.clone(),
            train_config: self.train_config.clone(),
            meta: self.meta.clone(),
            params: self
                .model
                .params
                .iter()
                .map(|(path, t)| IndexEntry {
                    path: path.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
        let header_len = u32::try_from(json.len()).map_err(|_| bad("header too large"))?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.model.params.num_values());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.model.params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let buf = &mut bytes;
        if take(buf, MAGIC.len(), "magic")? != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = read_u32(buf, "version")?;
        if version != FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let len = read_u32(buf, "header length")? as usize;
        let header: Header =
            serde_json::from_slice(take(buf, len, "header")?).map_err(|e| bad(format!("header: {e}")))?;
        let mut params = ParamSet::new();
        for entry in header.params {
            let n: usize = entry.shape.iter().product();
            let raw = take(buf, 8 * n, &entry.path)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.insert(entry.path, Tensor::new(entry.shape, data)?);
        }
        if !buf.is_empty() {
            return Err(bad(format!("{} trailing bytes", buf.len())));
        }
        let expected: Vec<_> = super::param_specs(&header.model_config)
            .into_iter()
            .map(|s| (s.path, s.shape))
            .collect();
        let mut actual: Vec<_> = params
            .iter()
            .map(|(p, t)| (p.to_string(), t.shape().to_vec()))
            .collect();
        let mut expected_sorted = expected;
        expected_sorted.sort();
        actual.sort();
        if expected_sorted != actual {
            return Err(bad("parameter index does not match the stored model configuration"));
        }
        Ok(Self {
            model: ModelParams {
                config: header.model_config,
                params,
            },
            stats: header.stats,
            train_config: header.train_config,
            meta: header.meta,
        })
    }

    /// Atomic write (temp file then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, &self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
