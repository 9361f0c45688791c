use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::format::{read_sample, LoadLabel, SampleRecord};
use super::synthetic::GeneratorConfig;
use crate::error::{Error, Result};
use crate::geometry::{FieldStats, Shape, StatsAccumulator};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const SAMPLE_DIR: &str = "samples";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub id: String,
    pub nodes: usize,
    pub label: LoadLabel,
    pub split: Split,
    /// Generating geometry, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Shape>,
}

/// Dataset index stored as `manifest.toml` next to `samples/<id>.pdn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    /// Empty for datasets not produced by the synthetic generator.
    #[serde(default)]
    pub generator_hash: String,
    pub split_ratio: f64,
    pub split_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    /// Fitted on the train split only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<FieldStats>,
    pub samples: Vec<SampleEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "{}: format version {} is not supported (expected {FORMAT_VERSION})",
                path.display(),
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    pub fn count(&self, split: Split) -> usize {
        self.samples.iter().filter(|s| s.split == split).count()
    }
}

/// A manifest with all of its samples in memory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    records: Vec<SampleRecord>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn from_parts(root: PathBuf, manifest: Manifest, records: Vec<SampleRecord>) -> Result<Self> {
        if manifest.samples.len() != records.len() {
            return Err(Error::LengthMismatch(manifest.samples.len(), records.len()));
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, (entry, rec)) in manifest.samples.iter().zip(&records).enumerate() {
            if entry.nodes != rec.nodes() || entry.label != rec.label {
                return Err(Error::Schema(format!(
                    "sample {} disagrees with its manifest entry ({} nodes, {:?} vs {} nodes, {:?})",
                    entry.id,
                    rec.nodes(),
                    rec.label,
                    entry.nodes,
                    entry.label
                )));
            }
            if index.insert(entry.id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate sample id {}", entry.id)));
            }
        }
        Ok(Self {
            root,
            manifest,
            records,
            index,
        })
    }

    /// Read the manifest under `root` and every sample it lists.
    pub fn open(root: &Path) -> Result<Self> {
        let manifest = Manifest::load(&root.join(MANIFEST_FILE))?;
        let dir = root.join(SAMPLE_DIR);
        let records = manifest
            .samples
            .par_iter()
            .map(|e| {
                let path = dir.join(format!("{}.pdn", e.id));
                read_sample(&path).map_err(|err| match err {
                    Error::Format { offset, msg } => Error::Format {
                        offset,
                        msg: format!("{}: {msg}", path.display()),
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(root.to_path_buf(), manifest, records)
    }

    pub fn save_manifest(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_FILE);
        std::fs::write(&path, self.manifest.to_toml()?).map_err(|e| Error::io(&path, e))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownSample(id.to_string()))
    }

    pub fn entry(&self, id: &str) -> Result<&SampleEntry> {
        Ok(&self.manifest.samples[self.index_of(id)?])
    }

    pub fn record(&self, id: &str) -> Result<&SampleRecord> {
        Ok(&self.records[self.index_of(id)?])
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    /// Ids of `split` in manifest order.
    pub fn ids(&self, split: Split) -> Vec<String> {
        self.manifest
            .samples
            .iter()
            .filter(|s| s.split == split)
            .map(|s| s.id.clone())
            .collect()
    }

    pub fn stats(&self) -> Result<&FieldStats> {
        self.manifest
            .stats
            .as_ref()
            .ok_or_else(|| Error::Schema("dataset has no fitted statistics".into()))
    }

    /// Refit normalization statistics on the train split.
    pub fn fit_stats(&mut self) -> Result<()> {
        let mut acc = StatsAccumulator::default();
        let mut any = false;
        for (entry, rec) in self.manifest.samples.iter().zip(&self.records) {
            if entry.split != Split::Train {
                continue;
            }
            any = true;
            acc.push_condition(rec.condition[0] as f64, rec.condition[1] as f64);
            for i in 0..rec.nodes() {
                acc.push_node(
                    rec.coords[i].map(f64::from),
                    rec.sdf[i] as f64,
                    rec.targets[i].map(f64::from),
                );
            }
        }
        if !any {
            return Err(Error::EmptySet("train split"));
        }
        self.manifest.stats = Some(acc.finish()?);
        Ok(())
    }
}

/// Deterministically reassign train/val and refit statistics on train.
pub fn split_dataset(ds: &mut Dataset, ratio: f64, seed: u64) -> Result<()> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Invalid(format!("split ratio {ratio} must lie in (0, 1)")));
    }
    let n = ds.len();
    if n < 2 {
        return Err(Error::Invalid(format!("splitting needs ≥ 2 samples, got {n}")));
    }
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (rank, &i) in order.iter().enumerate() {
        ds.manifest.samples[i].split = if rank < n_train { Split::Train } else { Split::Val };
    }
    ds.manifest.split_ratio = ratio;
    ds.manifest.split_seed = seed;
    ds.fit_stats()
}
