//! Microbenchmarks for the GF(2) kernels underneath everything else:
//! block multiply, rank, and inversion at the sizes the learner and the
//! elimination circuits actually use.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use paritylab_core::gf2::Gf2Matrix;
use paritylab_core::rng::rng_from_seed;
use std::hint::black_box;

fn bench_mul(c: &mut Criterion) {
    let mut group = c.benchmark_group("gf2_mul");
    for dim in [4usize, 8, 16, 64] {
        let mut rng = rng_from_seed(11);
        let a = Gf2Matrix::random(dim, dim, &mut rng);
        let b = Gf2Matrix::random(dim, dim, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(dim), &dim, |bench, _| {
            bench.iter(|| black_box(&a).mul(black_box(&b)))
        });
    }
    group.finish();
}

fn bench_rank(c: &mut Criterion) {
    let mut group = c.benchmark_group("gf2_rank");
    for dim in [8usize, 16, 64] {
        let mut rng = rng_from_seed(12);
        let a = Gf2Matrix::random(dim, dim, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(dim), &dim, |bench, _| {
            bench.iter(|| black_box(&a).rank())
        });
    }
    group.finish();
}

fn bench_invert(c: &mut Criterion) {
    let mut group = c.benchmark_group("gf2_invert");
    for dim in [4usize, 8, 16] {
        let mut rng = rng_from_seed(13);
        let a = loop {
            let candidate = Gf2Matrix::random(dim, dim, &mut rng);
            if candidate.rank() == dim {
                break candidate;
            }
        };
        group.bench_with_input(BenchmarkId::from_parameter(dim), &dim, |bench, _| {
            bench.iter(|| black_box(&a).invert().expect("full rank"))
        });
    }
    group.finish();
}

criterion_group!(kernels, bench_mul, bench_rank, bench_invert);
criterion_main!(kernels);
