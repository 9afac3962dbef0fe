use std::hint::black_box;

use anomman_core::lab::synthetic::{self, generate, SyntheticSpec};
use anomman_core::model::{forward, propagate};
use anomman_core::spectral::{extreme_frequencies, spectrum};
use anomman_core::structure::l1_loss;
use anomman_core::tensor::spmm;
use anomman_core::train::grad;
use anomman_core::{rng, DenseMatrix, HyperParams, ModelParams, MultiViewNetwork, Prepared};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn network(n: usize) -> MultiViewNetwork {
    generate(&SyntheticSpec {
        n,
        ..SyntheticSpec::benchmark(0)
    })
    .unwrap()
}

fn kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("spmm");
    for n in [500, 2000] {
        let net = network(n);
        let a = net.view(0).normalized();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| spmm(black_box(a), black_box(net.attributes())).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("structure_loss");
    for n in [500, 2000] {
        let net = network(n);
        let values = (0..n * 30).map(|i| (i * 37 % 101) as f64 / 101.0 - 0.3).collect();
        let z = DenseMatrix::from_vec(n, 30, values).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| l1_loss(black_box(&z), net.view(0).adjacency(), 256).unwrap())
        });
    }
    group.finish();
}

fn model(c: &mut Criterion) {
    let (net, _) = synthetic::benchmark(0).unwrap();
    let hp = HyperParams::default();
    let prepared = Prepared::new(&net, &hp).unwrap();
    let params = ModelParams::init(&hp, net.d(), net.k(), &mut rng::stream(0, rng::STREAM_INIT));
    c.bench_function("forward/benchmark", |b| {
        b.iter(|| forward(&prepared, black_box(&params), &hp).unwrap())
    });
    c.bench_function("propagate/benchmark", |b| {
        b.iter(|| propagate(net.view(0), black_box(net.attributes()), 3).unwrap())
    });
    c.bench_function("grad/benchmark", |b| {
        b.iter(|| grad(&prepared, black_box(&params), &hp).unwrap())
    });
}

fn spectra(c: &mut Criterion) {
    let small = network(400);
    c.bench_function("spectrum/full/400", |b| {
        b.iter(|| spectrum(small.view(0), None, 3).unwrap())
    });
    let large = network(3000);
    let mut group = c.benchmark_group("spectrum");
    group.sample_size(10);
    group.bench_function("extremes/3000", |b| {
        b.iter(|| extreme_frequencies(large.view(0), 5).unwrap())
    });
    group.finish();
}

criterion_group!(benches, kernels, model, spectra);
criterion_main!(benches);
