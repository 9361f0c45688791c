//! PointNet, DeepONet and Point-DeepONet surrogates over the autodiff kernel.

mod net;
mod spec;

pub use net::{
    Forward, LatentOverride, Model, ModelInput, CONDITION_DIM, POINTNET_INPUT_DIM, QUERY_DIM,
};
pub use spec::{Architecture, LoadCondition, ModelSpec, REFERENCE_PARAMETER_COUNTS};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Graph, Mode, Tensor};
    use crate::Error;

    fn input(b: usize, n: usize, seed: u64) -> ModelInput {
        let mut s = seed as f64;
        let mut next = move || {
            s += 1.0;
            ((s * 12.9898).sin() * 43758.5453).fract()
        };
        ModelInput {
            condition: Tensor::from_fn(&[b, 5], |_| next()),
            coords: Tensor::from_fn(&[b, n, 3], |_| next()),
            sdf: Some(Tensor::from_fn(&[b, n], |_| next())),
            cloud: None,
        }
    }

    fn small(arch: Architecture) -> ModelSpec {
        let mut s = ModelSpec::for_architecture(arch).with_width(6);
        s.points = 5;
        s.pointnet_scale = 0.1;
        s
    }

    fn warm(model: &mut Model, x: &ModelInput) {
        let mut g = Graph::new();
        model.forward(&mut g, x, Mode::Train, &LatentOverride::default()).unwrap();
        let stats = g.batch_stats().to_vec();
        model.norms.absorb(&stats);
    }

    #[test]
    fn same_seed_same_parameters() {
        for arch in [Architecture::PointNet, Architecture::DeepOnet, Architecture::PointDeepOnet] {
            let a = Model::new(small(arch), 3).unwrap();
            let b = Model::new(small(arch), 3).unwrap();
            let c = Model::new(small(arch), 4).unwrap();
            let same = a.params.iter().zip(b.params.iter()).all(|(x, y)| x.2 == y.2);
            let diff = a.params.iter().zip(c.params.iter()).any(|(x, y)| x.2 != y.2);
            assert!(same && diff, "{arch:?}");
        }
    }

    #[test]
    fn output_shapes_and_head_ranges() {
        for arch in [Architecture::PointNet, Architecture::DeepOnet, Architecture::PointDeepOnet] {
            let mut m = Model::new(small(arch), 1).unwrap();
            let x = input(2, 5, 0);
            warm(&mut m, &x);
            let y = m.predict(&x).unwrap();
            assert_eq!(y.shape(), &[2, 5, 4]);
            let (lo, hi) = if arch == Architecture::PointNet { (0.0, 1.0) } else { (-1.0, 1.0) };
            assert!(y.data().iter().all(|&v| v > lo && v < hi));
        }
    }

    #[test]
    fn pointnet_rejects_other_resolutions() {
        let mut m = Model::new(small(Architecture::PointNet), 1).unwrap();
        warm(&mut m, &input(2, 5, 0));
        match m.predict(&input(2, 7, 0)) {
            Err(Error::UnsupportedResolution(_)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn operators_accept_any_node_count() {
        let mut m = Model::new(small(Architecture::PointDeepOnet), 1).unwrap();
        warm(&mut m, &input(2, 5, 0));
        assert_eq!(m.predict(&input(2, 11, 1)).unwrap().shape(), &[2, 11, 4]);
    }

    #[test]
    fn missing_sdf_is_a_schema_error() {
        let m = Model::new(small(Architecture::DeepOnet), 1).unwrap();
        let mut x = input(1, 3, 0);
        x.sdf = None;
        assert!(matches!(m.predict(&x), Err(Error::Schema(_))));
    }

    #[test]
    fn deeponet_output_from_overridden_latents() {
        let m = Model::new(small(Architecture::DeepOnet), 1).unwrap();
        let h = m.spec.latent;
        // B = 1, T[h, m] = atanh(0.5)/H for every field: every output is 0.5.
        let t = 0.5f64.atanh() / h as f64;
        let hooks = LatentOverride {
            branch: Some(Tensor::full(&[1, h], 1.0)),
            trunk: Some(Tensor::full(&[1, 3, h * 4], t)),
            ..Default::default()
        };
        let mut g = Graph::new();
        let out = m.forward(&mut g, &input(1, 3, 0), Mode::Eval, &hooks).unwrap();
        assert!(g.value(out.output).data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn deeponet_two_wide_latent_example() {
        let mut spec = small(Architecture::DeepOnet);
        spec.latent = 2;
        let m = Model::new(spec, 1).unwrap();
        // B = [1, 2], T[·, m] = [0.1, 0.2] for every field m.
        let trunk = Tensor::from_fn(&[1, 1, 8], |i| if i < 4 { 0.1 } else { 0.2 });
        let hooks = LatentOverride {
            branch: Some(Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap()),
            trunk: Some(trunk),
            ..Default::default()
        };
        let mut g = Graph::new();
        let out = m.forward(&mut g, &input(1, 1, 0), Mode::Eval, &hooks).unwrap();
        for &v in g.value(out.output).data() {
            assert!((v - 0.46211715).abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn zero_branch_annihilates_fresh_point_deeponet() {
        let m = Model::new(small(Architecture::PointDeepOnet), 1).unwrap();
        let hooks = LatentOverride {
            branch: Some(Tensor::zeros(&[2, m.spec.latent])),
            ..Default::default()
        };
        let mut g = Graph::new();
        let out = m.forward(&mut g, &input(2, 4, 0), Mode::Eval, &hooks).unwrap();
        assert!(g.value(out.output).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn point_deeponet_output_from_overridden_heads() {
        let m = Model::new(small(Architecture::PointDeepOnet), 1).unwrap();
        let h = m.spec.latent;
        let hooks = LatentOverride {
            branch_beta: Some(Tensor::zeros(&[1, 3, h])),
            trunk: Some(Tensor::full(&[1, 3, h * 4], 1.0)),
            ..Default::default()
        };
        let mut g = Graph::new();
        let out = m.forward(&mut g, &input(1, 3, 0), Mode::Eval, &hooks).unwrap();
        assert!(g.value(out.output).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ablation_masks_inputs() {
        let mut spec = small(Architecture::DeepOnet);
        spec.use_mass = false;
        spec.use_sdf = false;
        let m = Model::new(spec, 1).unwrap();
        let x = input(2, 3, 0);
        let parts = m.assemble(&x).unwrap();
        assert!(parts[0].data().chunks(5).all(|c| c[0] == 0.0));
        assert!(parts[1].data().chunks(4).all(|q| q[3] == 0.0));
        let mut other = x.clone();
        other.condition.data_mut()[0] += 1.0;
        other.sdf = None;
        assert_eq!(m.predict(&x).unwrap(), m.predict(&other).unwrap());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for arch in [Architecture::DeepOnet, Architecture::PointDeepOnet, Architecture::PointNet] {
            let mut spec = small(arch);
            spec.sine_omega = 2.0;
            let mut m = Model::new(spec, 7).unwrap();
            let x = input(2, 5, 3);
            let train = m.grad_check(&x, Mode::Train, 1e-6, 0).unwrap();
            assert!(train.passes(1e-4), "{arch:?} train {train:?}");
            warm(&mut m, &x);
            let eval = m.grad_check(&x, Mode::Eval, 1e-6, 0).unwrap();
            assert!(eval.passes(1e-4), "{arch:?} eval {eval:?}");
        }
    }
}
