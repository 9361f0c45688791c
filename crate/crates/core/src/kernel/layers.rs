use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{BatchStats, Graph, Var};
use super::params::{ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Weight initialization scheme for a dense layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Glorot/Xavier uniform weights, zero bias.
    Glorot,
    /// Glorot bound multiplied by the given factor, zero bias.
    GlorotScaled(f64),
    /// `U(±1/√fan_in)` for weights and bias.
    FanIn,
    /// First SIREN layer: `U(±1/fan_in)`.
    SirenFirst,
    /// Hidden SIREN layer: `U(±√(6/fan_in)/ω)`.
    SirenHidden(f64),
}

/// Fully connected layer, shared across all leading axes (a kernel-size-1 convolution
/// when applied to a point axis).
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let fi = fan_in as f64;
        let (w_bound, b_bound) = match init {
            Init::Glorot => ((6.0 / (fi + fan_out as f64)).sqrt(), 0.0),
            Init::GlorotScaled(k) => (k * (6.0 / (fi + fan_out as f64)).sqrt(), 0.0),
            Init::FanIn => (1.0 / fi.sqrt(), 1.0 / fi.sqrt()),
            Init::SirenFirst => (1.0 / fi, 1.0 / fi.sqrt()),
            Init::SirenHidden(omega) => ((6.0 / fi).sqrt() / omega, 1.0 / fi.sqrt()),
        };
        let mut uniform = |bound: f64| {
            if bound == 0.0 {
                0.0
            } else {
                rng.gen_range(-bound..bound)
            }
        };
        let w = Tensor::from_fn(&[fan_in, fan_out], |_| uniform(w_bound));
        let b = Tensor::from_fn(&[fan_out], |_| uniform(b_bound));
        Self {
            weight: store.add(format!("{name}.weight"), w),
            bias: store.add(format!("{name}.bias"), b),
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, g: &mut Graph, params: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(params, self.weight);
        let b = g.param(params, self.bias);
        g.linear(x, w, b)
    }

    pub fn parameter_count(fan_in: usize, fan_out: usize) -> usize {
        fan_in * fan_out + fan_out
    }
}

/// Running statistics of one batchnorm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub name: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    pub initialized: bool,
}

/// All batchnorm running statistics of a model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormStore {
    slots: Vec<RunningStats>,
}

impl NormStore {
    pub fn add(&mut self, name: impl Into<String>, channels: usize) -> usize {
        self.slots.push(RunningStats {
            name: name.into(),
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
            initialized: false,
        });
        self.slots.len() - 1
    }

    pub fn get(&self, slot: usize) -> &RunningStats {
        &self.slots[slot]
    }

    pub fn slots(&self) -> &[RunningStats] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [RunningStats] {
        &mut self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Fold batch statistics recorded on `g` into the running estimates.
    ///
    /// Running variance uses the unbiased batch variance.
    pub fn absorb(&mut self, stats: &[BatchStats]) {
        for s in stats {
            let r = &mut self.slots[s.slot];
            let unbias = if s.count > 1 {
                s.count as f64 / (s.count as f64 - 1.0)
            } else {
                1.0
            };
            let m = r.momentum;
            for j in 0..r.mean.len() {
                r.mean[j] = (1.0 - m) * r.mean[j] + m * s.mean[j];
                r.var[j] = (1.0 - m) * r.var[j] + m * s.var[j] * unbias;
            }
            r.initialized = true;
        }
    }
}

/// Channel-last batch normalization with learnable scale and shift.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub slot: usize,
    pub channels: usize,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, norms: &mut NormStore, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[channels], 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels])),
            slot: norms.add(name, channels),
            channels,
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        params: &ParamStore,
        norms: &NormStore,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        let gamma = g.param(params, self.gamma);
        let beta = g.param(params, self.beta);
        let stats = norms.get(self.slot);
        match mode {
            Mode::Train => {
                let count = g.value(x).rows();
                let (y, mean, var) = g.batchnorm_train(x, gamma, beta, stats.eps)?;
                g.record_batch_stats(BatchStats {
                    slot: self.slot,
                    mean,
                    var,
                    count,
                });
                Ok(y)
            }
            Mode::Eval => {
                if !stats.initialized {
                    return Err(Error::UninitializedStatistics(stats.name.clone()));
                }
                g.batchnorm_eval(x, gamma, beta, &stats.mean, &stats.var, stats.eps)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_parameter_counts() {
        assert_eq!(Dense::parameter_count(5, 128), 768);
        assert_eq!(Dense::parameter_count(4, 128), 640);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Dense::new(&mut store, "d", 5, 128, Init::Glorot, &mut rng);
        assert_eq!(store.scalar_count(), 768);
    }

    #[test]
    fn eval_before_train_is_an_error() {
        let mut store = ParamStore::new();
        let mut norms = NormStore::default();
        let bn = BatchNorm::new(&mut store, &mut norms, "bn", 3);
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[4, 3]));
        let err = bn.forward(&mut g, &store, &norms, x, Mode::Eval);
        assert!(matches!(err, Err(Error::UninitializedStatistics(_))));
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut store = ParamStore::new();
        let mut norms = NormStore::default();
        let bn = BatchNorm::new(&mut store, &mut norms, "bn", 1);
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        bn.forward(&mut g, &store, &norms, x, Mode::Train).unwrap();
        norms.absorb(g.batch_stats());
        let s = norms.get(0);
        assert!((s.mean[0] - 0.25).abs() < 1e-15);
        // unbiased var of 1..4 = 5/3
        assert!((s.var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-15);
        assert!(s.var.iter().all(|&v| v >= 0.0));
        assert!(s.initialized);
    }

    #[test]
    fn random_input_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let mut norms = NormStore::default();
        let bn = BatchNorm::new(&mut store, &mut norms, "bn", 3);
        let data = Tensor::from_fn(&[4, 25, 3], |i| rng.gen_range(-2.0..5.0) * (1 + i % 3) as f64);
        let mut g = Graph::new();
        let x = g.constant(data);
        let y = bn.forward(&mut g, &store, &norms, x, Mode::Train).unwrap();
        // zero-variance-free oracle: direct statistics of the output
        let out = g.value(y).data();
        for c in 0..3 {
            let col: Vec<f64> = out.iter().skip(c).step_by(3).copied().collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-10, "mean {mean}");
            // epsilon shifts the variance by var/(var+eps); inputs have var >> eps
            let raw: Vec<f64> = g.value(x).data().iter().skip(c).step_by(3).copied().collect();
            let rm = raw.iter().sum::<f64>() / n;
            let rv = raw.iter().map(|v| (v - rm).powi(2)).sum::<f64>() / n;
            let expected = rv / (rv + BN_EPS);
            assert!((var - expected).abs() < 1e-10, "var {var} vs {expected}");
            assert!((var - 1.0).abs() < 1e-5);
        }
    }
}
