use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use pointdon::geometry::{resample_fixed, Shape};
use pointdon::kernel::{Dense, Graph, Init, Mode, ParamStore, Tensor};
use pointdon::models::{LatentOverride, Model, ModelInput, ModelSpec};
use pointdon::train::{predict_chunked, DEFAULT_CHUNK};
use pointdon::TriMesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.gen_range(-1.0..1.0))
}

fn input(b: usize, n: usize, r: &mut ChaCha8Rng) -> ModelInput {
    let mut condition = random(&[b, 5], r);
    // Unit load direction.
    for row in condition.data_mut().chunks_exact_mut(5) {
        let norm = row[2..].iter().map(|v| v * v).sum::<f64>().sqrt();
        row[2..].iter_mut().for_each(|v| *v /= norm);
    }
    ModelInput {
        condition,
        coords: random(&[b, n, 3], r),
        sdf: Some(random(&[b, n], r)),
        cloud: None,
    }
}

/// Benchmark-width Point-DeepONet with batchnorm statistics in place.
fn benchmark_model(r: &mut ChaCha8Rng) -> Model {
    let mut spec = ModelSpec::default().with_width(64);
    spec.points = 256;
    let mut model = Model::new(spec, 0).unwrap();
    let mut g = Graph::new();
    model.forward(&mut g, &input(16, 256, r), Mode::Train, &LatentOverride::default()).unwrap();
    let stats = g.batch_stats().to_vec();
    model.norms.absorb(&stats);
    model
}

fn dense(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(0);
    let mut params = ParamStore::new();
    let layer = Dense::new(&mut params, "d", 64, 64, Init::Glorot, &mut r);
    let x = random(&[16, 256, 64], &mut r);
    c.bench_function("dense 4096x64x64 forward+backward", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let v = g.constant(x.clone());
            let y = layer.forward(&mut g, &params, v).unwrap();
            let s = g.sum(y);
            g.backward(s).unwrap();
            black_box(g.len())
        })
    });
}

fn training_step(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let model = benchmark_model(&mut r);
    let batch = input(16, 256, &mut r);
    let target = random(&[16, 256, 4], &mut r);
    let mut group = c.benchmark_group("point_deeponet H=64");
    group.sample_size(10);
    group.bench_function("forward+backward B=16 N=256", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let out = model.forward(&mut g, &batch, Mode::Train, &LatentOverride::default()).unwrap();
            let loss = g.mse(out.output, &target).unwrap();
            g.backward(loss).unwrap();
            black_box(g.value(loss).item())
        })
    });
    let mut full = input(1, 2048, &mut r);
    full.cloud = Some(random(&[1, 256, 3], &mut r));
    group.bench_function("chunked inference M=2048", |b| {
        b.iter(|| black_box(predict_chunked(&model, &full, DEFAULT_CHUNK).unwrap()))
    });
    group.finish();
}

fn geometry(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mesh = Shape::Mesh(TriMesh::icosphere([0.0; 3], 1.0, 4));
    let probes: Vec<[f64; 3]> = (0..1000)
        .map(|_| std::array::from_fn(|_| r.gen_range(-2.0..2.0)))
        .collect();
    c.bench_function("icosphere mesh sdf x1000", |b| {
        b.iter(|| probes.iter().map(|&p| mesh.sdf(p)).sum::<f64>())
    });
    let mut seed = 0;
    c.bench_function("resample 2048 -> 256", |b| {
        b.iter_batched(
            || {
                seed += 1;
                seed
            },
            |s| resample_fixed(2048, 256, s),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, dense, training_step, geometry);
criterion_main!(benches);
