use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Apply one update. Parameters without a gradient are treated as having a
    /// zero gradient (they still decay).
    ///
    /// Every gradient is checked before anything is written, so a non-finite
    /// gradient leaves parameters and moments untouched.
    pub fn step<'a>(
        &mut self,
        params: &mut ParamStore,
        grads: impl IntoIterator<Item = (ParamId, Option<&'a [f64]>)>,
    ) -> Result<()> {
        let mut table: Vec<Option<&[f64]>> = vec![None; params.len()];
        for (id, g) in grads {
            table[id.index()] = g;
        }
        for id in params.ids() {
            if let Some(g) = table[id.index()] {
                if g.len() != params.get(id).len() {
                    return Err(Error::LengthMismatch(g.len(), params.get(id).len()));
                }
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient {
                        param: params.name(id).to_string(),
                        step: self.step + 1,
                    });
                }
            }
        }
        self.step += 1;
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let decay = 1.0 - lr * weight_decay;
        for id in params.ids() {
            let i = id.index();
            let g = table[i];
            let theta = params.get_mut(id).data_mut();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..theta.len() {
                let gj = g.map_or(0.0, |g| g[j]);
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                theta[j] = theta[j] * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Tensor;

    fn single(theta: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("theta", Tensor::new(&[1], vec![theta]).unwrap());
        (s, id)
    }

    #[test]
    fn first_step_hand_value() {
        let (mut s, id) = single(1.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        opt.step(&mut s, [(id, Some(&[0.5][..]))]).unwrap();
        // θ(1 - lr·λ) - lr·m̂/(√v̂ + eps), m̂ = 0.5, √v̂ = 0.5
        let oracle = 1.0 * (1.0 - 1e-3 * 1e-2) - 1e-3 * 0.5 / (0.5 + 1e-8);
        let got = s.get(id).item();
        assert_eq!(got, oracle);
        assert!((got - 0.99899).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        let (mut s, id) = single(0.731);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &s);
        for _ in 0..5 {
            opt.step(&mut s, [(id, Some(&[0.0][..]))]).unwrap();
        }
        assert_eq!(s.get(id).item(), 0.731);
        assert_eq!(opt.step, 5);
    }

    #[test]
    fn identical_histories_stay_identical() {
        let mut s = ParamStore::new();
        let a = s.add("a", Tensor::new(&[1], vec![0.3]).unwrap());
        let b = s.add("b", Tensor::new(&[1], vec![0.3]).unwrap());
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        for k in 0..20 {
            let g = [0.1 * (k as f64).sin()];
            opt.step(&mut s, [(a, Some(&g[..])), (b, Some(&g[..]))]).unwrap();
        }
        assert_eq!(s.get(a).item().to_bits(), s.get(b).item().to_bits());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let (mut s, id) = single(1.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        let err = opt.step(&mut s, [(id, Some(&[f64::NAN][..]))]).unwrap_err();
        match err {
            Error::NonFiniteGradient { param, step } => {
                assert_eq!(param, "theta");
                assert_eq!(step, 1);
            }
            e => panic!("{e}"),
        }
        assert_eq!(s.get(id).item(), 1.0);
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn second_moment_nonnegative() {
        let (mut s, id) = single(1.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        for g in [-3.0, 2.0, -0.5] {
            opt.step(&mut s, [(id, Some(&[g][..]))]).unwrap();
            assert!(opt.v[0][0] >= 0.0);
        }
    }
}
