use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;
use tsbpca_bench::{geometric, stationary};
use tsbpca_core::oracle::oracle_basis;
use tsbpca_core::{compress, RunConfig};

fn by_length(c: &mut Criterion) {
    let mut group = c.benchmark_group("compress/length");
    let config = RunConfig::new(10, 2).with_seed(21);
    for n in [250, 500, 1000] {
        let ds = stationary(64, n);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &ds, |b, ds| {
            b.iter(|| compress(black_box(ds), &config).unwrap())
        });
    }
    group.finish();
}

fn by_components(c: &mut Criterion) {
    let mut group = c.benchmark_group("compress/components");
    let ds = geometric(64, 200, 16);
    for k in [1, 2, 4, 8] {
        let config = RunConfig::new(10, k).with_seed(22);
        group.bench_with_input(BenchmarkId::from_parameter(k), &config, |b, config| {
            b.iter(|| compress(black_box(&ds), config).unwrap())
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let ds = stationary(64, 200);
    c.bench_function("oracle/stationary", |b| {
        b.iter(|| oracle_basis(black_box(&ds), 2).unwrap())
    });
}

criterion_group!(benches, by_length, by_components, oracle);
criterion_main!(benches);
