use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::format::{LoadLabel, SampleRecord};
use super::manifest::Dataset;
use super::derive_seed;
use crate::error::{Error, Result};
use crate::geometry::{resample_fixed, FieldStats, HeadRange};
use crate::kernel::Tensor;
use crate::models::{LoadCondition, ModelInput};

/// Normalized inputs and targets of several samples at a common node count.
#[derive(Debug, Clone)]
pub struct Batch {
    pub ids: Vec<String>,
    pub labels: Vec<LoadLabel>,
    pub input: ModelInput,
    /// `[B, N, 4]` in head space.
    pub targets: Tensor,
}

struct Columns {
    coords: Vec<f64>,
    sdf: Vec<f64>,
    condition: Vec<f64>,
    targets: Vec<f64>,
}

impl Columns {
    fn with_capacity(b: usize, n: usize) -> Self {
        Self {
            coords: Vec::with_capacity(b * n * 3),
            sdf: Vec::with_capacity(b * n),
            condition: Vec::with_capacity(b * 5),
            targets: Vec::with_capacity(b * n * 4),
        }
    }

    fn push(&mut self, rec: &SampleRecord, nodes: &[usize], stats: &FieldStats, head: HeadRange) {
        let load = LoadCondition::from_array(rec.condition.map(f64::from));
        self.condition.extend(load.normalized(stats));
        for &i in nodes {
            self.coords.extend(stats.normalize_coords(rec.coords[i].map(f64::from)));
            self.sdf.push(stats.normalize_sdf(rec.sdf[i] as f64));
            self.targets
                .extend(stats.normalize_targets(rec.targets[i].map(f64::from), head));
        }
    }

    fn finish(self, b: usize, n: usize) -> Result<(ModelInput, Tensor)> {
        Ok((
            ModelInput {
                condition: Tensor::new(&[b, 5], self.condition)?,
                coords: Tensor::new(&[b, n, 3], self.coords)?,
                sdf: Some(Tensor::new(&[b, n], self.sdf)?),
                cloud: None,
            },
            Tensor::new(&[b, n, 4], self.targets)?,
        ))
    }
}

/// Resample each listed sample to `n` nodes and normalize with the dataset
/// statistics. Sample `k` of the batch uses the resampling seed derived from
/// `(seed, k)`.
pub fn make_batch<S: AsRef<str>>(
    ds: &Dataset,
    ids: &[S],
    n: usize,
    seed: u64,
    head: HeadRange,
) -> Result<Batch> {
    if n == 0 {
        return Err(Error::Invalid("resample size must be ≥ 1".into()));
    }
    if ids.is_empty() {
        return Err(Error::EmptySet("batch"));
    }
    let stats = ds.stats()?;
    let mut cols = Columns::with_capacity(ids.len(), n);
    let mut labels = Vec::with_capacity(ids.len());
    for (k, id) in ids.iter().enumerate() {
        let rec = ds.record(id.as_ref())?;
        let nodes = resample_fixed(rec.nodes(), n, derive_seed(seed, k as u64));
        cols.push(rec, &nodes, stats, head);
        labels.push(rec.label);
    }
    let (input, targets) = cols.finish(ids.len(), n)?;
    Ok(Batch {
        ids: ids.iter().map(|s| s.as_ref().to_string()).collect(),
        labels,
        input,
        targets,
    })
}

/// One sample at every stored node, in storage order.
pub fn full_batch(ds: &Dataset, id: &str, head: HeadRange) -> Result<Batch> {
    let rec = ds.record(id)?;
    let m = rec.nodes();
    let mut cols = Columns::with_capacity(1, m);
    cols.push(rec, &(0..m).collect::<Vec<_>>(), ds.stats()?, head);
    let (input, targets) = cols.finish(1, m)?;
    Ok(Batch {
        ids: vec![id.to_string()],
        labels: vec![rec.label],
        input,
        targets,
    })
}

/// Seeded draw of `count` ids from `pool`, with replacement.
pub fn draw_ids(pool: &[String], count: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    use rand::Rng;
    (0..count)
        .map(|_| pool[rng.gen_range(0..pool.len())].clone())
        .collect()
}

/// Seeded generator for id draws.
pub fn batch_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}
