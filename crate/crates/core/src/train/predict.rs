use crate::data::{derive_seed, Batch};
use crate::error::{Error, Result};
use crate::geometry::{resample_fixed, FieldStats, PointSet};
use crate::kernel::{Graph, Mode, Tensor};
use crate::models::{LatentOverride, LoadCondition, Model, ModelInput};

/// Query points per forward pass during inference.
pub const DEFAULT_CHUNK: usize = 8192;

fn slice_points(t: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    let s = t.shape();
    let (b, n) = (s[0], s[1]);
    let inner: usize = s[2..].iter().product();
    let mut data = Vec::with_capacity(b * (end - start) * inner);
    for bi in 0..b {
        data.extend_from_slice(&t.data()[(bi * n + start) * inner..(bi * n + end) * inner]);
    }
    let mut shape = s.to_vec();
    shape[1] = end - start;
    Tensor::new(&shape, data)
}

/// Eval-mode prediction in head space, `[B, N, fields]`, processing at most
/// `chunk` query points per forward pass. Operator branches are evaluated
/// once and held fixed across chunks.
pub fn predict_chunked(model: &Model, input: &ModelInput, chunk: usize) -> Result<Tensor> {
    let n = input.points();
    if !model.architecture().is_operator() || n <= chunk {
        return model.predict(input);
    }
    let chunk = chunk.max(1);
    let hooks = LatentOverride {
        branch: Some(model.branch_latent(input, Mode::Eval)?),
        ..Default::default()
    };
    let b = input.batch();
    let f = model.spec.fields;
    let mut out = vec![0.0; b * n * f];
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let part = ModelInput {
            condition: input.condition.clone(),
            coords: slice_points(&input.coords, start, end)?,
            sdf: input.sdf.as_ref().map(|s| slice_points(s, start, end)).transpose()?,
            cloud: None,
        };
        let mut g = Graph::new();
        let y = model.forward(&mut g, &part, Mode::Eval, &hooks)?;
        let y = g.value(y.output).data();
        let len = end - start;
        for bi in 0..b {
            out[(bi * n + start) * f..(bi * n + end) * f]
                .copy_from_slice(&y[bi * len * f..(bi + 1) * len * f]);
        }
        start = end;
    }
    Tensor::new(&[b, n, f], out)
}

/// Full-resolution input: every node is a query, and the branch point cloud
/// is a seeded resample of the nodes to the training size.
pub fn full_resolution_input(model: &Model, mut input: ModelInput, seed: u64) -> Result<ModelInput> {
    if !model.architecture().is_operator() {
        return Err(Error::UnsupportedResolution(format!(
            "{} is tied to its training node count and has no full-resolution mode",
            model.architecture().name()
        )));
    }
    if input.cloud.is_none() {
        let (b, m) = (input.batch(), input.points());
        let mut cloud = Vec::with_capacity(b * model.spec.points * 3);
        for bi in 0..b {
            for i in resample_fixed(m, model.spec.points, derive_seed(seed, bi as u64)) {
                let at = (bi * m + i) * 3;
                cloud.extend_from_slice(&input.coords.data()[at..at + 3]);
            }
        }
        input.cloud = Some(Tensor::new(&[b, model.spec.points, 3], cloud)?);
    }
    Ok(input)
}

/// Physical-unit fields `(u_x, u_y, u_z, von_mises)` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPrediction {
    pub coords: Vec<[f64; 3]>,
    pub fields: Vec<[f64; 4]>,
}

/// Predict fields on raw points for one load condition.
///
/// `sdf` is required when the model was trained with SDF inputs. Operator
/// models accept any node count; PointNet needs exactly its training count.
pub fn predict_points(
    model: &Model,
    stats: &FieldStats,
    coords: &[[f64; 3]],
    sdf: Option<&[f64]>,
    load: &LoadCondition,
    seed: u64,
) -> Result<FieldPrediction> {
    load.validate(1e-6)?;
    let mut missing = Vec::new();
    if model.spec.use_sdf && sdf.is_none() {
        missing.push("sdf");
    }
    if coords.is_empty() {
        missing.push("coords");
    }
    if !missing.is_empty() {
        return Err(Error::Schema(format!("missing inputs: {}", missing.join(", "))));
    }
    let m = coords.len();
    if let Some(s) = sdf {
        if s.len() != m {
            return Err(Error::LengthMismatch(m, s.len()));
        }
    }
    let input = ModelInput {
        condition: Tensor::new(&[1, 5], load.normalized(stats).to_vec())?,
        coords: Tensor::new(
            &[1, m, 3],
            coords.iter().flat_map(|&p| stats.normalize_coords(p)).collect(),
        )?,
        sdf: sdf
            .map(|s| Tensor::new(&[1, m], s.iter().map(|&d| stats.normalize_sdf(d)).collect()))
            .transpose()?,
        cloud: None,
    };
    let y = if model.architecture().is_operator() {
        let input = full_resolution_input(model, input, seed)?;
        predict_chunked(model, &input, DEFAULT_CHUNK)?
    } else {
        model.predict(&input)?
    };
    let head = model.spec.head();
    let fields = y
        .data()
        .chunks_exact(4)
        .map(|v| stats.denormalize_targets([v[0], v[1], v[2], v[3]], head))
        .collect();
    Ok(FieldPrediction {
        coords: coords.to_vec(),
        fields,
    })
}

/// [`predict_points`] on a [`PointSet`].
pub fn predict_point_set(
    model: &Model,
    stats: &FieldStats,
    points: &PointSet,
    load: &LoadCondition,
    seed: u64,
) -> Result<FieldPrediction> {
    predict_points(model, stats, &points.coords, Some(&points.sdf), load, seed)
}

/// How a split is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Each sample resampled to the training node count.
    Sampled,
    /// Every stored node.
    Full,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Sampled => "sampled",
            EvalMode::Full => "full",
        }
    }
}

/// Anything that maps a normalized batch to normalized predictions.
pub trait FieldPredictor: Sync {
    fn head(&self) -> crate::geometry::HeadRange;
    /// Node count used in sampled mode.
    fn points(&self) -> usize;
    fn supports_full(&self) -> bool;
    /// `[B, N, 4]` in head space.
    fn predict_batch(&self, batch: &Batch, mode: EvalMode, seed: u64) -> Result<Tensor>;
}

impl FieldPredictor for Model {
    fn head(&self) -> crate::geometry::HeadRange {
        self.spec.head()
    }

    fn points(&self) -> usize {
        self.spec.points
    }

    fn supports_full(&self) -> bool {
        self.architecture().is_operator()
    }

    fn predict_batch(&self, batch: &Batch, mode: EvalMode, seed: u64) -> Result<Tensor> {
        match mode {
            EvalMode::Sampled => predict_chunked(self, &batch.input, DEFAULT_CHUNK),
            EvalMode::Full => {
                let input = full_resolution_input(self, batch.input.clone(), seed)?;
                predict_chunked(self, &input, DEFAULT_CHUNK)
            }
        }
    }
}
