use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use sttopo_bench::{coefficients, ex1_mesh, system, vector};
use sttopo_core::linalg::Multigrid;
use sttopo_core::{build_hierarchy, Assembler, CoarseningStrategy, LevelCount, MaterialSet, SolverConfig};

fn spmv(c: &mut Criterion) {
    let mut group = c.benchmark_group("spmv");
    for n in [16, 32] {
        let j = system(ex1_mesh(n));
        let x = vector(j.ncols());
        let mut y = vec![0.0; j.nrows()];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| j.mul_into(black_box(&x), &mut y)));
    }
    group.finish();
}

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    group.sample_size(20);
    for n in [16, 32] {
        let mesh = ex1_mesh(n);
        let (cc, k) = coefficients(&mesh);
        let asm = Assembler::new(mesh);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| asm.system(black_box(&cc), &k).unwrap()));
    }
    group.finish();
}

fn vcycle(c: &mut Criterion) {
    let mut group = c.benchmark_group("vcycle");
    group.sample_size(10);
    for strategy in [CoarseningStrategy::Semi, CoarseningStrategy::Full] {
        let mesh = ex1_mesh(32);
        let h = build_hierarchy(&mesh, &MaterialSet::default(), LevelCount::Auto, 0.5, strategy).unwrap();
        let mut mg = Multigrid::new(system(mesh), &h, SolverConfig::default()).unwrap();
        let r = vector(mesh.num_nodes());
        let mut z = vec![0.0; r.len()];
        group.bench_function(format!("{strategy:?}"), |b| b.iter(|| mg.vcycle(black_box(&r), &mut z).unwrap()));
    }
    group.finish();
}

criterion_group!(kernels, spmv, assembly, vcycle);
criterion_main!(kernels);
