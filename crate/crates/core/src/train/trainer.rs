use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use crate::data::{batch_rng, derive_seed, make_batch, Batch, Dataset, Split};
use crate::error::{Error, Result};
use crate::geometry::FieldStats;
use crate::kernel::{AdamW, AdamWConfig, Graph, Mode};
use crate::models::{LatentOverride, Model, ModelSpec};

/// Optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Iterations between validation losses, history rows and checkpoints.
    pub eval_interval: u64,
    /// Fixed validation batches per evaluation; 0 uses the whole split.
    pub val_batches: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            batch_size: 16,
            lr: 1e-3,
            weight_decay: 1e-2,
            seed: 0,
            eval_interval: 100,
            val_batches: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 || self.eval_interval == 0 {
            return Err(Error::Invalid("iterations, batch_size and eval_interval must be ≥ 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Invalid(format!("lr must be finite and ≥ 0, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Invalid("weight_decay must be finite and ≥ 0".into()));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// One line of the loss history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: u64,
    /// Mean training loss since the previous row.
    pub train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
}

pub const HISTORY_COLUMNS: [&str; 3] = ["iteration", "train_loss", "val_loss"];

pub fn write_history(rows: &[HistoryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HISTORY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.train_loss.to_string(),
            r.val_loss.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Model, optimizer and progress of one run.
pub struct Trainer {
    pub model: Model,
    pub optimizer: AdamW,
    pub stats: FieldStats,
    pub iteration: u64,
    pub seed: u64,
    pub history: Vec<HistoryRow>,
}

impl Trainer {
    pub fn new(spec: ModelSpec, config: &TrainConfig, stats: FieldStats) -> Result<Self> {
        config.validate()?;
        let model = Model::new(spec, derive_seed(config.seed, 0))?;
        let optimizer = AdamW::new(config.optimizer(), &model.params);
        Ok(Self {
            model,
            optimizer,
            stats,
            iteration: 0,
            seed: config.seed,
            history: Vec::new(),
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(Self {
            model: ckpt.model()?,
            optimizer: ckpt.optimizer.clone(),
            stats: ckpt.stats,
            iteration: ckpt.iteration,
            seed: ckpt.seed,
            history: ckpt.history.clone(),
        })
    }

    /// One optimizer step on `batch`; returns the pre-update training loss.
    ///
    /// A non-finite loss is reported before any state changes.
    pub fn step(&mut self, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let out = self
            .model
            .forward(&mut g, &batch.input, Mode::Train, &LatentOverride::default())?;
        let loss = g.mse(out.output, &batch.targets)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: self.iteration + 1,
            });
        }
        g.backward(loss)?;
        self.optimizer.step(&mut self.model.params, g.param_grads())?;
        self.model.norms.absorb(g.batch_stats());
        self.iteration += 1;
        Ok(value)
    }

    /// Eval-mode mean squared error on `batch`.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let out = self
            .model
            .forward(&mut g, &batch.input, Mode::Eval, &LatentOverride::default())?;
        let loss = g.mse(out.output, &batch.targets)?;
        Ok(g.value(loss).item())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            spec: self.model.spec.clone(),
            stats: self.stats,
            iteration: self.iteration,
            seed: self.seed,
            params: self.model.params.clone(),
            norms: self.model.norms.clone(),
            optimizer: self.optimizer.clone(),
            history: self.history.clone(),
        }
    }
}

/// Where [`train`] writes its artifacts; both are rewritten at every history row.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    pub checkpoint: Option<PathBuf>,
    pub history: Option<PathBuf>,
}

/// Fixed validation batches, seeded independently of the training stream.
pub fn validation_batches(ds: &Dataset, spec: &ModelSpec, config: &TrainConfig) -> Result<Vec<Batch>> {
    let ids = ds.ids(Split::Val);
    let mut chunks: Vec<&[String]> = ids.chunks(config.batch_size).collect();
    if config.val_batches > 0 {
        chunks.truncate(config.val_batches);
    }
    chunks
        .into_iter()
        .enumerate()
        .map(|(c, ids)| {
            make_batch(ds, ids, spec.points, derive_seed(config.seed, 1 << 32 | c as u64), spec.head())
        })
        .collect()
}

/// Train `spec` on the train split of `ds`.
///
/// Batches are drawn without replacement within an epoch. Every
/// `eval_interval` iterations a history row is appended, the validation loss
/// is computed on fixed batches, and the outputs are rewritten. On a
/// non-finite loss the run aborts and the last written checkpoint stays.
pub fn train(
    spec: ModelSpec,
    config: &TrainConfig,
    ds: &Dataset,
    outputs: &TrainOutputs,
    mut progress: impl FnMut(&HistoryRow),
) -> Result<Trainer> {
    let stats = *ds.stats()?;
    let mut trainer = Trainer::new(spec, config, stats)?;
    let train_ids = ds.ids(Split::Train);
    if train_ids.is_empty() {
        return Err(Error::EmptySet("train split"));
    }
    let val = validation_batches(ds, &trainer.model.spec, config)?;
    let (points, head) = (trainer.model.spec.points, trainer.model.spec.head());
    let mut rng = batch_rng(config.seed, 1);
    let mut order: Vec<usize> = Vec::new();
    let (mut acc, mut acc_n) = (0.0, 0u64);
    while trainer.iteration < config.iterations {
        let mut ids = Vec::with_capacity(config.batch_size);
        while ids.len() < config.batch_size {
            if order.is_empty() {
                order = (0..train_ids.len()).collect();
                order.shuffle(&mut rng);
            }
            ids.push(train_ids[order.pop().unwrap()].as_str());
        }
        let batch = make_batch(ds, &ids, points, rng.next_u64(), head)?;
        acc += trainer.step(&batch)?;
        acc_n += 1;
        if trainer.iteration % config.eval_interval == 0 || trainer.iteration == config.iterations {
            let val_loss = if val.is_empty() {
                None
            } else {
                let mut total = 0.0;
                for b in &val {
                    total += trainer.loss(b)?;
                }
                Some(total / val.len() as f64)
            };
            let row = HistoryRow {
                iteration: trainer.iteration,
                train_loss: acc / acc_n as f64,
                val_loss,
            };
            (acc, acc_n) = (0.0, 0);
            trainer.history.push(row);
            if let Some(p) = &outputs.history {
                write_history(&trainer.history, p)?;
            }
            if let Some(p) = &outputs.checkpoint {
                trainer.checkpoint().save(p)?;
            }
            progress(&row);
        }
    }
    Ok(trainer)
}
