//! Decode and sketch throughput on the rayon pool against a one-thread pool.
//!
//! With `--no-default-features` both arms run the sequential code path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use detsketch::linf::{build_linf_scheme, linf_decode};
use detsketch::planted::{planted, strict_zipf, PlantedShape};
use detsketch::strict::{build_split_tree, recursive_decode};
use detsketch::apply;
use rayon::ThreadPoolBuilder;

const N: usize = 4096;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("pool", ThreadPoolBuilder::new().build().unwrap()),
        ("one_thread", ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
    ]
}

fn linf(c: &mut Criterion) {
    let k = 4;
    let scheme = build_linf_scheme(N, k, 7).unwrap();
    let x = planted(N, k, &PlantedShape::standard(k), 1).signal;
    let v = apply(&scheme, &x).unwrap();
    let mut g = c.benchmark_group("linf_n4096_k4");
    g.sample_size(20);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("apply", name), |b| b.iter(|| pool.install(|| apply(&scheme, &x).unwrap())));
        g.bench_function(BenchmarkId::new("decode", name), |b| {
            b.iter(|| pool.install(|| linf_decode(&scheme, &v.values, None).unwrap()))
        });
    }
    g.finish();
}

fn strict(c: &mut Criterion) {
    let tree = build_split_tree(N, 2).unwrap();
    let x = strict_zipf(N, 1.2, 1000.0, 1);
    let v = apply(&tree, &x).unwrap();
    let mut g = c.benchmark_group("strict_n4096_k2");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("decode", name), |b| {
            b.iter(|| pool.install(|| recursive_decode(&tree, &v.values).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, linf, strict);
criterion_main!(benches);
