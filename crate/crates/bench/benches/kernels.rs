use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use ragg_bench::{attacked, benign, threshold, with_outliers};
use ragg_core::aggregators::{chunked_aggregate, filtering_step, meta_aggregate, Subroutine};
use ragg_core::attacks::{hidra_corrupt_chunked, AttackConfig};
use ragg_core::linalg::{top_eigenpair, PowerIteration};
use ragg_core::WeightVector;

fn power_iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("power_iteration");
    for d in [50, 200, 1000] {
        let x = benign(100, d, d, 1);
        let w = WeightVector::uniform(100);
        group.bench_with_input(BenchmarkId::from_parameter(d), &x, |b, x| {
            b.iter(|| top_eigenpair(black_box(x), &w, &PowerIteration::default(), 3).unwrap())
        });
    }
    group.finish();
}

fn filtering(c: &mut Criterion) {
    let x = with_outliers(100, 50, 0.2, 2);
    let w = WeightVector::uniform(100);
    c.bench_function("filtering_step", |b| b.iter(|| filtering_step(black_box(&x), &w, 5).unwrap()));
    let cfg = threshold();
    c.bench_function("meta_aggregate_filtering", |b| {
        b.iter(|| meta_aggregate(black_box(&x), 0.2, &cfg, Subroutine::Filtering, 5).unwrap())
    });
    c.bench_function("meta_aggregate_noregret", |b| {
        b.iter(|| meta_aggregate(black_box(&x), 0.2, &cfg, Subroutine::NoRegret, 5).unwrap())
    });
}

fn chunked(c: &mut Criterion) {
    let y = attacked(100, 4000, 1000, 0.2, 4);
    let cfg = threshold();
    c.bench_function("chunked_aggregate_4000", |b| {
        b.iter(|| chunked_aggregate(black_box(&y), 1000, 0.2, &cfg, Subroutine::Filtering, 9).unwrap())
    });
}

fn hidra(c: &mut Criterion) {
    let x = benign(100, 4000, 1000, 6);
    let cfg = AttackConfig::new(0.2, threshold().xi());
    c.bench_function("hidra_corrupt_4000", |b| {
        b.iter(|| hidra_corrupt_chunked(black_box(&x), 1000, &cfg, None, 1).unwrap())
    });
}

criterion_group!(benches, power_iteration, filtering, chunked, hidra);
criterion_main!(benches);
