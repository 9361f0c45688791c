use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{compute_metrics, Metrics};
use super::predict::{EvalMode, FieldPredictor};
use crate::data::{derive_seed, full_batch, make_batch, Dataset, LoadLabel, Split};
use crate::error::{Error, Result};
use crate::geometry::FIELD_NAMES;

/// One `(mode, field, label)` cell in physical units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub mode: EvalMode,
    pub field: &'static str,
    pub label: LoadLabel,
    /// Node count over all samples of the group.
    pub n: usize,
    pub samples: usize,
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
}

/// Per-field metrics pooled over every label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledRow {
    pub mode: EvalMode,
    pub field: &'static str,
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub pooled: Vec<PooledRow>,
}

pub const REPORT_COLUMNS: [&str; 8] = ["mode", "field", "label", "n", "samples", "mae", "rmse", "r2"];

impl MetricsReport {
    /// Mean over fields of the pooled R² of `mode`.
    pub fn mean_r2(&self, mode: EvalMode) -> Option<f64> {
        let v: Vec<f64> = self.pooled.iter().filter(|p| p.mode == mode).map(|p| p.r2).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn row(&self, mode: EvalMode, field: &str, label: LoadLabel) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.field == field && r.label == label)
    }

    pub fn merge(&mut self, other: MetricsReport) {
        self.rows.extend(other.rows);
        self.pooled.extend(other.pooled);
    }

    /// One row per `(mode, field, label)`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(REPORT_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.mode.name().to_string(),
                r.field.to_string(),
                r.label.name().to_string(),
                r.n.to_string(),
                r.samples.to_string(),
                r.mae.to_string(),
                r.rmse.to_string(),
                r.r2.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Default)]
struct Group {
    y: [Vec<f64>; 4],
    y_hat: [Vec<f64>; 4],
    samples: usize,
}

/// Evaluate every sample of `split` in `mode`, grouping by load label.
///
/// Sampled mode resamples sample `j` of the split with a seed derived from
/// `(seed, j)`; full mode uses every node and is limited to operator models.
pub fn evaluate<P: FieldPredictor + ?Sized>(
    predictor: &P,
    ds: &Dataset,
    split: Split,
    mode: EvalMode,
    seed: u64,
) -> Result<MetricsReport> {
    if mode == EvalMode::Full && !predictor.supports_full() {
        return Err(Error::UnsupportedResolution(
            "full-resolution evaluation needs an operator model".into(),
        ));
    }
    let ids = ds.ids(split);
    if ids.is_empty() {
        return Err(Error::EmptySet("evaluation split"));
    }
    let stats = ds.stats()?;
    let head = predictor.head();
    let per_sample = ids
        .par_iter()
        .enumerate()
        .map(|(j, id)| {
            let s = derive_seed(seed, j as u64);
            let batch = match mode {
                EvalMode::Sampled => make_batch(ds, &[id], predictor.points(), s, head)?,
                EvalMode::Full => full_batch(ds, id, head)?,
            };
            let pred = predictor.predict_batch(&batch, mode, s)?;
            if pred.shape() != batch.targets.shape() {
                return Err(Error::shape("prediction", pred.shape(), batch.targets.shape()));
            }
            if pred.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("non-finite prediction for sample {id}")));
            }
            Ok((batch.labels[0], batch.targets, pred))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut groups: BTreeMap<LoadLabel, Group> = BTreeMap::new();
    for (label, y, y_hat) in per_sample {
        let g = groups.entry(label).or_default();
        g.samples += 1;
        for (t, p) in y.data().chunks_exact(4).zip(y_hat.data().chunks_exact(4)) {
            for k in 0..4 {
                g.y[k].push(stats.denormalize_target(k, t[k], head));
                g.y_hat[k].push(stats.denormalize_target(k, p[k], head));
            }
        }
    }

    let mut report = MetricsReport::default();
    for (k, field) in FIELD_NAMES.into_iter().enumerate() {
        for (&label, g) in &groups {
            let m = compute_metrics(&g.y[k], &g.y_hat[k])
                .map_err(|e| Error::Invalid(format!("{field}/{}: {e}", label.name())))?;
            report.rows.push(row(mode, field, label, g.y[k].len(), g.samples, m));
        }
        let y: Vec<f64> = groups.values().flat_map(|g| g.y[k].iter().copied()).collect();
        let y_hat: Vec<f64> = groups.values().flat_map(|g| g.y_hat[k].iter().copied()).collect();
        let m = compute_metrics(&y, &y_hat)?;
        report.pooled.push(PooledRow {
            mode,
            field,
            n: y.len(),
            mae: m.mae,
            rmse: m.rmse,
            r2: m.r2,
        });
    }
    Ok(report)
}

fn row(mode: EvalMode, field: &'static str, label: LoadLabel, n: usize, samples: usize, m: Metrics) -> MetricsRow {
    assert!(m.rmse >= m.mae * (1.0 - 1e-12) && m.mae >= 0.0, "RMSE < MAE in {field}");
    MetricsRow {
        mode,
        field,
        label,
        n,
        samples,
        mae: m.mae,
        rmse: m.rmse,
        r2: m.r2,
    }
}
