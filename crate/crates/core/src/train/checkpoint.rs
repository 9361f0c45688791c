//! Single-file binary checkpoints: magic, version, a TOML header describing
//! every tensor, then raw little-endian `f64` payloads in header order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trainer::HistoryRow;
use crate::error::{Error, Result};
use crate::geometry::FieldStats;
use crate::kernel::{AdamW, AdamWConfig, NormStore, ParamStore, Tensor};
use crate::models::{Model, ModelSpec};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PDNC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NormEntry {
    name: String,
    channels: usize,
    momentum: f64,
    eps: f64,
    initialized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    iteration: u64,
    seed: u64,
    optimizer_step: u64,
    optimizer: AdamWConfig,
    model: ModelSpec,
    stats: FieldStats,
    tensors: Vec<TensorEntry>,
    norms: Vec<NormEntry>,
    history: Vec<HistoryRow>,
}

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub stats: FieldStats,
    pub iteration: u64,
    pub seed: u64,
    pub params: ParamStore,
    pub norms: NormStore,
    pub optimizer: AdamW,
    pub history: Vec<HistoryRow>,
}

impl Checkpoint {
    /// Rebuild the model with the stored parameters and statistics.
    pub fn model(&self) -> Result<Model> {
        let mut model = Model::new(self.spec.clone(), 0)?;
        if model.params.len() != self.params.len() {
            return Err(Error::Schema(format!(
                "checkpoint has {} tensors, model expects {}",
                self.params.len(),
                model.params.len()
            )));
        }
        for ((_, a, ta), (_, b, tb)) in model.params.iter().zip(self.params.iter()) {
            if a != b || ta.shape() != tb.shape() {
                return Err(Error::Schema(format!(
                    "checkpoint tensor `{b}` {:?} does not match model tensor `{a}` {:?}",
                    tb.shape(),
                    ta.shape()
                )));
            }
        }
        let names_match = model.norms.len() == self.norms.len()
            && model
                .norms
                .slots()
                .iter()
                .zip(self.norms.slots())
                .all(|(a, b)| a.name == b.name && a.mean.len() == b.mean.len());
        if !names_match {
            return Err(Error::Schema("checkpoint batchnorm layout does not match the model".into()));
        }
        model.params = self.params.clone();
        model.norms = self.norms.clone();
        Ok(model)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = Header {
            iteration: self.iteration,
            seed: self.seed,
            optimizer_step: self.optimizer.step,
            optimizer: self.optimizer.config,
            model: self.spec.clone(),
            stats: self.stats,
            tensors: self
                .params
                .iter()
                .map(|(_, n, t)| TensorEntry {
                    name: n.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            norms: self
                .norms
                .slots()
                .iter()
                .map(|s| NormEntry {
                    name: s.name.clone(),
                    channels: s.mean.len(),
                    momentum: s.momentum,
                    eps: s.eps,
                    initialized: s.initialized,
                })
                .collect(),
            history: self.history.clone(),
        };
        let text = toml::to_string(&header).map_err(|e| Error::Config(format!("checkpoint header: {e}")))?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        let mut put = |xs: &[f64]| xs.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        for (_, _, t) in self.params.iter() {
            put(t.data());
        }
        for s in self.norms.slots() {
            put(&s.mean);
            put(&s.var);
        }
        for (m, v) in self.optimizer.m.iter().zip(&self.optimizer.v) {
            put(m);
            put(v);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, msg: String| Error::Format {
            offset: offset as u64,
            msg,
        };
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(fail(0, "not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(fail(4, format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| fail(8, format!("header length {hlen} exceeds file size {}", bytes.len())))?;
        let text = std::str::from_utf8(&bytes[16..body]).map_err(|e| fail(16, e.to_string()))?;
        let h: Header = toml::from_str(text).map_err(|e| fail(16, format!("header: {e}")))?;

        let mut pos = body;
        let mut take = |n: usize, what: &str| -> Result<Vec<f64>> {
            let end = pos + 8 * n;
            if end > bytes.len() {
                return Err(fail(pos, format!("truncated {what}: need {} bytes, {} available", 8 * n, bytes.len() - pos)));
            }
            let v = bytes[pos..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            pos = end;
            Ok(v)
        };
        let mut params = ParamStore::new();
        for t in &h.tensors {
            let n = t.shape.iter().product();
            params.add(t.name.clone(), Tensor::new(&t.shape, take(n, &t.name)?)?);
        }
        let mut norms = NormStore::default();
        for e in &h.norms {
            let slot = norms.add(e.name.clone(), e.channels);
            let mean = take(e.channels, &e.name)?;
            let var = take(e.channels, &e.name)?;
            let s = &mut norms.slots_mut()[slot];
            s.mean = mean;
            s.var = var;
            s.momentum = e.momentum;
            s.eps = e.eps;
            s.initialized = e.initialized;
        }
        let mut optimizer = AdamW::new(h.optimizer, &params);
        optimizer.step = h.optimizer_step;
        for (i, t) in h.tensors.iter().enumerate() {
            let n = t.shape.iter().product();
            optimizer.m[i] = take(n, "optimizer moments")?;
            optimizer.v[i] = take(n, "optimizer moments")?;
        }
        if pos != bytes.len() {
            return Err(fail(pos, format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(Self {
            spec: h.model,
            stats: h.stats,
            iteration: h.iteration,
            seed: h.seed,
            params,
            norms,
            optimizer,
            history: h.history,
        })
    }

    /// Written to a sibling temporary file first so a crash never leaves a
    /// partial checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.encode()?;
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}
