//! Benchmarks for the data-parallel sampling core against its sequential
//! fallback, plus the per-method hot paths on a mid-size benchmark
//! portfolio. Run with `cargo bench -p creditmc` (parallel feature on by
//! default) and `cargo bench -p creditmc --no-default-features` to compare.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use creditmc::cmc::sample_losses;
use creditmc::embedding::build_embedding;
use creditmc::importance::{mean_shift_tail_bound, one_step_sample, two_step_sample};
use creditmc::parallel::{map_indexed, map_indexed_seq};
use creditmc::portfolio::{benchmark_gaussian, PreparedModel};
use creditmc::rng::{RngStream, StreamFamily, StreamNamespace};
use creditmc::splitting::{fixed_effort_estimate, LevelSchedule, SplitPolicy};

fn bench_map_indexed(c: &mut Criterion) {
    let mut group = c.benchmark_group("map_indexed");
    for &n in &[1_000usize, 10_000] {
        // A draw-size workload: one stream init plus a few hundred floats.
        let work = |i: usize| {
            let mut rng = RngStream::new(7, i as u64);
            let mut acc = 0.0f64;
            for _ in 0..256 {
                acc += rand::Rng::random::<f64>(&mut rng);
            }
            acc
        };
        group.bench_with_input(BenchmarkId::new("dispatch", n), &n, |b, &n| {
            b.iter(|| black_box(map_indexed(n, work)))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| black_box(map_indexed_seq(n, work)))
        });
    }
    group.finish();
}

fn bench_estimators(c: &mut Criterion) {
    let (p, model) = benchmark_gaussian(300).unwrap();
    let prep = PreparedModel::new(&model, &p).unwrap();
    let family = StreamFamily::new(11, StreamNamespace::Estimate, 0).unwrap();
    let gamma = 160.0;

    let mut group = c.benchmark_group("estimators_d300");
    group.sample_size(10);
    group.bench_function("cmc_sample_2k", |b| {
        b.iter(|| black_box(sample_losses(&prep, 2_000, &family)))
    });
    group.bench_function("is1_sample_2k", |b| {
        b.iter(|| black_box(one_step_sample(&model, &p, gamma, 2_000, &family).unwrap()))
    });
    let shift = mean_shift_tail_bound(&p, gamma).unwrap();
    group.bench_function("is2_sample_2k", |b| {
        b.iter(|| black_box(two_step_sample(&model, &p, gamma, &shift, 2_000, &family).unwrap()))
    });
    let plan = build_embedding(&model, &p).unwrap();
    let sched = LevelSchedule::uniform(5, SplitPolicy::FixedEffort, 200).unwrap();
    group.bench_function("ds_fe_pass_s200_l5", |b| {
        b.iter(|| black_box(fixed_effort_estimate(&plan, gamma, &sched, &family).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, bench_map_indexed, bench_estimators);
criterion_main!(benches);
