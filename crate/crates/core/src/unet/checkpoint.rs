//! Versioned checkpoint container.
//!
//! Byte layout, all integers little-endian:
//!
//! ```text
//! offset  size  content
//! 0       8     magic "FOAUNET\0"
//! 8       4     format version (u32, currently 1)
//! 12      4     header length H (u32)
//! 16      H     UTF-8 JSON header
//! 16+H    4·N   tensor payload, f32 LE, tensors back to back in header order
//! end-32  32    SHA-256 of every preceding byte
//! ```
//!
//! The header holds the network configuration, the feature standardization
//! statistics, the optimizer step count, optional training progress, and the
//! tensor table: name, kind (`param`, `buffer`, `nadam_m`, `nadam_v`) and
//! shape of every stored tensor. On load every tensor is checked against the
//! shapes a freshly built model of the stored configuration would have.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::train::{EpochRecord, Snapshot, TrainState};
use super::{UNetConfig, UNetModel};
use crate::beamform::FeatureStats;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FOAUNET\0";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// Serializable part of a [`TrainState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainProgress {
    pub epoch: usize,
    /// `None` before the first validation.
    pub best_val: Option<f64>,
    pub best_epoch: usize,
    pub stale: usize,
    pub stopped_early: bool,
    pub log: Vec<EpochRecord>,
}

impl TrainProgress {
    pub fn of<T>(state: &TrainState<T>) -> Self {
        Self {
            epoch: state.epoch,
            best_val: state.best_val.is_finite().then_some(state.best_val),
            best_epoch: state.best_epoch,
            stale: state.stale,
            stopped_early: state.stopped_early,
            log: state.log.clone(),
        }
    }

    pub fn into_state(self, best: Option<Snapshot<f32>>) -> TrainState<f32> {
        TrainState {
            epoch: self.epoch,
            best_val: self.best_val.unwrap_or(f64::INFINITY),
            best_epoch: self.best_epoch,
            stale: self.stale,
            log: self.log,
            best,
            stopped_early: self.stopped_early,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Kind {
    Param,
    Buffer,
    NadamM,
    NadamV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    name: String,
    kind: Kind,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: UNetConfig,
    feature_stats: Option<FeatureStats>,
    optimizer_step: u64,
    progress: Option<TrainProgress>,
    tensors: Vec<Entry>,
}

fn err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Encodes a model and optional training progress.
pub fn to_bytes(model: &UNetModel<f32>, progress: Option<&TrainProgress>) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut payload: Vec<&[f32]> = Vec::new();
    for p in model.params() {
        tensors.push(Entry {
            name: p.name.clone(),
            kind: Kind::Param,
            shape: p.shape.clone(),
        });
        payload.push(&p.value);
    }
    for b in model.buffers() {
        tensors.push(Entry {
            name: b.name.clone(),
            kind: Kind::Buffer,
            shape: b.shape.clone(),
        });
        payload.push(&b.value);
    }
    for (kind, moments) in [(Kind::NadamM, &model.optimizer.m), (Kind::NadamV, &model.optimizer.v)] {
        for (p, m) in model.params().iter().zip(moments) {
            tensors.push(Entry {
                name: p.name.clone(),
                kind,
                shape: p.shape.clone(),
            });
            payload.push(m);
        }
    }
    let header = Header {
        config: model.config().clone(),
        feature_stats: model.feature_stats.clone(),
        optimizer_step: model.optimizer.step,
        progress: progress.cloned(),
        tensors,
    };
    let json = serde_json::to_vec(&header).map_err(|e| err(e.to_string()))?;
    let header_len = u32::try_from(json.len()).map_err(|_| err("header too large"))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&json);
    for t in payload {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Decodes and validates a checkpoint.
pub fn from_bytes(bytes: &[u8]) -> Result<(UNetModel<f32>, Option<TrainProgress>)> {
    if bytes.len() < 16 + DIGEST_LEN {
        return Err(err("file too short"));
    }
    if &bytes[..8] != MAGIC {
        return Err(err("bad magic"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(err("checksum mismatch"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(body[12..16].try_into().expect("4 bytes")) as usize;
    let json = body
        .get(16..16 + header_len)
        .ok_or_else(|| err("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| err(format!("header: {e}")))?;
    let mut payload = body[16 + header_len..].chunks_exact(4);
    if payload.len() * 4 != body.len() - 16 - header_len {
        return Err(err("payload is not a whole number of f32 values"));
    }

    let mut model = UNetModel::<f32>::build(header.config.clone(), 0)
        .map_err(|e| err(format!("stored configuration: {e}")))?;
    let n_params = model.params().len();
    let n_buffers = model.buffers().len();
    if header.tensors.len() != 3 * n_params + n_buffers {
        return Err(err(format!(
            "{} tensors stored, configuration needs {}",
            header.tensors.len(),
            3 * n_params + n_buffers
        )));
    }
    let mut next = |entry: &Entry, kind: Kind, name: &str, shape: &[usize]| -> Result<Vec<f32>> {
        if entry.kind != kind || entry.name != name || entry.shape != shape {
            return Err(err(format!(
                "tensor {:?} {} {:?} where {:?} {} {:?} was expected",
                entry.kind, entry.name, entry.shape, kind, name, shape
            )));
        }
        let len: usize = shape.iter().product();
        let vals: Vec<f32> = payload
            .by_ref()
            .take(len)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        if vals.len() != len {
            return Err(err(format!("payload ends inside tensor {name}")));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(err(format!("non-finite value in tensor {name}")));
        }
        Ok(vals)
    };
    let mut entries = header.tensors.iter();
    for i in 0..n_params {
        let (name, shape) = (model.params()[i].name.clone(), model.params()[i].shape.clone());
        let v = next(entries.next().expect("counted"), Kind::Param, &name, &shape)?;
        model.params_mut()[i].value = v;
    }
    for i in 0..n_buffers {
        let (name, shape) = (model.buffers()[i].name.clone(), model.buffers()[i].shape.clone());
        let v = next(entries.next().expect("counted"), Kind::Buffer, &name, &shape)?;
        model.buffers_mut()[i].value = v;
    }
    for kind in [Kind::NadamM, Kind::NadamV] {
        for i in 0..n_params {
            let (name, shape) = (model.params()[i].name.clone(), model.params()[i].shape.clone());
            let v = next(entries.next().expect("counted"), kind, &name, &shape)?;
            match kind {
                Kind::NadamM => model.optimizer.m[i] = v,
                _ => model.optimizer.v[i] = v,
            }
        }
    }
    if payload.next().is_some() {
        return Err(err("trailing payload"));
    }
    if let Some(stats) = &header.feature_stats {
        let c = &header.config;
        if stats.channels != c.input_features || stats.bins != c.freq_bins_net {
            return Err(err("feature statistics do not match the configuration"));
        }
    }
    model.optimizer.step = header.optimizer_step;
    model.feature_stats = header.feature_stats;
    Ok((model, header.progress))
}

/// Writes a checkpoint atomically (temporary file, then rename).
pub fn save(path: &Path, model: &UNetModel<f32>, progress: Option<&TrainProgress>) -> Result<()> {
    let bytes = to_bytes(model, progress)?;
    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(UNetModel<f32>, Option<TrainProgress>)> {
    from_bytes(&fs::read(path)?)
}
