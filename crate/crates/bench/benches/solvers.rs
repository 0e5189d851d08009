use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use perishape_bench::{ellipse, unit_disk};
use perishape_core::contour;
use perishape_core::distance::redistance;
use perishape_core::eigen::eigenpairs;
use perishape_core::optimizer::boundary_velocity;
use perishape_core::pde::torsion;
use perishape_core::{FunctionalSpec, Objective};

fn poisson(c: &mut Criterion) {
    let mut group = c.benchmark_group("torsion");
    group.sample_size(10);
    for n in [32u32, 64, 128] {
        let set = unit_disk(1.0 / n as f64);
        group.bench_with_input(BenchmarkId::from_parameter(n), &set, |b, s| b.iter(|| torsion(s).unwrap()));
    }
    group.finish();
}

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("eigenpairs");
    group.sample_size(10);
    for (n, k) in [(32u32, 1usize), (64, 1), (64, 5)] {
        let set = unit_disk(1.0 / n as f64);
        group.bench_with_input(BenchmarkId::new(format!("k{k}"), n), &set, |b, s| b.iter(|| eigenpairs(s, k).unwrap()));
    }
    group.finish();
}

fn geometry(c: &mut Criterion) {
    let set = ellipse(1.0 / 64.0);
    c.bench_function("marching_squares/64", |b| b.iter(|| contour::extract(set.grid(), set.values())));
    c.bench_function("redistance/64", |b| b.iter(|| redistance(&set)));
}

fn velocity(c: &mut Criterion) {
    let set = ellipse(1.0 / 64.0);
    let obj = Objective::new(FunctionalSpec::Spectral(vec![1.0]), PI, 1.0).unwrap();
    let mut group = c.benchmark_group("shape_gradient");
    group.sample_size(10);
    group.bench_function("spectral/64", |b| b.iter(|| boundary_velocity(&obj, &set).unwrap()));
    group.finish();
}

criterion_group!(benches, poisson, eigen, geometry, velocity);
criterion_main!(benches);
