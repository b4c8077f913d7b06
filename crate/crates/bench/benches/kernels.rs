use criterion::{criterion_group, criterion_main, Criterion};
use nodalsphere::covariance::{delta_matrix, scaled_entries};
use nodalsphere::field::{sample_indexed, GridSpec, SynthesisPlan};
use nodalsphere::kacrice::expected_norm_product;
use nodalsphere::legendre::legendre_triplet;
use nodalsphere::nodal::extract_nodal;
use std::hint::black_box;

fn legendre(c: &mut Criterion) {
    c.bench_function("legendre_triplet n=1000", |b| b.iter(|| legendre_triplet(black_box(1000), black_box(0.37)).unwrap()));
    c.bench_function("legendre_triplet n=100000", |b| b.iter(|| legendre_triplet(black_box(100_000), black_box(0.37)).unwrap()));
}

fn norm_product(c: &mut Criterion) {
    let d = delta_matrix(&scaled_entries(200, 17.0).unwrap()).unwrap();
    c.bench_function("expected_norm_product", |b| b.iter(|| expected_norm_product(black_box(&d)).unwrap()));
}

fn synth_extract(c: &mut Criterion) {
    let n = 40;
    let plan = SynthesisPlan::new(n, GridSpec::for_degree(n, 10.0).unwrap()).unwrap();
    let s = sample_indexed(n, 1, 0).unwrap();
    c.bench_function("synthesize n=40", |b| b.iter(|| plan.synthesize(black_box(&s)).unwrap()));
    let f = plan.synthesize(&s).unwrap();
    c.bench_function("extract_nodal n=40", |b| b.iter(|| extract_nodal(black_box(&f)).unwrap()));
}

criterion_group!(benches, legendre, norm_product, synth_extract);
criterion_main!(benches);
