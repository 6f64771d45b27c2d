use std::hint::black_box;

use bifree_core::bnc::{enumerate_bnc, mobius_bnc, mobius_interval};
use bifree_core::{BncPartition, ChiWord};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn enumeration(c: &mut Criterion) {
    let mut group = c.benchmark_group("enumerate_bnc");
    for chi in ["llrlr", "lrlrlr", "llrrlrlr"] {
        let w: ChiWord = chi.parse().unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(chi), &w, |b, w| {
            b.iter(|| enumerate_bnc(black_box(w)).unwrap())
        });
    }
    group.finish();
}

fn mobius(c: &mut Criterion) {
    let chi: ChiWord = "llrrlrlr".parse().unwrap();
    let all = enumerate_bnc(&chi).unwrap();
    let top = BncPartition::one(chi.clone());
    c.bench_function("mobius_bnc/all_below_one_n8", |b| {
        b.iter(|| {
            all.iter()
                .map(|s| mobius_bnc(s, &top).unwrap())
                .sum::<i64>()
        })
    });
    c.bench_function("mobius_interval/one_n8", |b| {
        b.iter(|| mobius_interval(black_box(&top)).len())
    });
}

criterion_group!(benches, enumeration, mobius);
criterion_main!(benches);
