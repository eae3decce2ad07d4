use std::hint::black_box;

use bdqsd::spectral::{conditioned_semigroup, truncated_decay_oracle};
use bdqsd::{fv_run, qsd_family, stream_rng, xi1, EmpiricalMeasure, FvConfig, ParticleSystem};
use bdqsd_bench::models;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn fv_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("fv_step");
    let steps = 10_000u64;
    group.throughput(Throughput::Elements(steps));
    for (name, model) in models() {
        for n in [10usize, 100, 1000] {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                let mut sys = ParticleSystem::new(&model, vec![1; n], stream_rng(1, 0)).unwrap();
                for _ in 0..10 * n {
                    sys.step().unwrap();
                }
                b.iter(|| {
                    for _ in 0..steps {
                        black_box(sys.step().unwrap());
                    }
                })
            });
        }
    }
    group.finish();
}

fn fv_runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("fv_run");
    group.sample_size(10);
    for (name, model) in models() {
        group.bench_function(BenchmarkId::new(name, 100), |b| {
            b.iter(|| fv_run(&model, vec![1; 100], &FvConfig::new(50.0), stream_rng(2, 0)).unwrap())
        });
    }
    group.finish();
}

fn spectral(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral");
    for (name, model) in models() {
        group.bench_function(BenchmarkId::new("xi1", name), |b| {
            b.iter(|| xi1(&model, black_box(2000), 1e-8).unwrap())
        });
        group.bench_function(BenchmarkId::new("oracle", name), |b| {
            b.iter(|| truncated_decay_oracle(&model, black_box(2000)).unwrap())
        });
        let x = xi1(&model, 2000, 1e-10).unwrap().lo;
        group.bench_function(BenchmarkId::new("qsd_family", name), |b| {
            b.iter(|| qsd_family(&model, black_box(x), 50, None).unwrap())
        });
    }
    let (_, linear) = &models()[0];
    group.bench_function("semigroup/linear", |b| {
        b.iter(|| conditioned_semigroup(linear, &EmpiricalMeasure::dirac(2), black_box(1.0), 100).unwrap())
    });
    group.finish();
}

criterion_group!(benches, fv_steps, fv_runs, spectral);
criterion_main!(benches);
