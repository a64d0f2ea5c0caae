use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use levy_rds::conjugacy_ito::{build_cohomology, AnchorLattice, CohomologyOptions};
use levy_rds::flows::{integrate_ito, FnField, SystemSpec};
use levy_rds::levy_paths::{sample_path, JumpLaw, LevyTriplet, TimeGrid};
use levy_rds::marcus::{integrate_marcus, FlowMap, MarcusSystem};
use levy_rds::{Matrix, Vector};

fn triplet() -> LevyTriplet {
    LevyTriplet::gaussian(Matrix::from_element(1, 1, 0.3)).with_jumps(0.5, JumpLaw::UniformBall { radius: 0.2 })
}

fn paths(c: &mut Criterion) {
    let tr = triplet();
    c.bench_function("sample_path 1e4 cells", |b| {
        b.iter(|| sample_path(black_box(&tr), (-5.0, 5.0), 1e-3, 7).unwrap())
    });
}

fn integrators(c: &mut Criterion) {
    let p = sample_path(&triplet(), (-1.0, 1.0), 1e-4, 3).unwrap();
    let grid = TimeGrid::new(&p, 0.0, 1.0, 1e-4).unwrap();
    let x0 = Vector::from_element(1, 0.8);
    let ito = SystemSpec::new(
        Arc::new(FnField::scalar(|x| -x * x * x, |x| -3.0 * x * x)),
        vec![Arc::new(FnField::scalar(|x| 0.5 * x, |_| 0.5))],
    )
    .unwrap();
    c.bench_function("integrate_ito 1e4 steps", |b| b.iter(|| integrate_ito(&ito, &p, black_box(&x0), &grid).unwrap()));
    let marcus = MarcusSystem::new(
        Arc::new(FnField::scalar(|x| -x * x * x, |x| -3.0 * x * x)),
        FlowMap::linear(vec![Matrix::identity(1, 1)]).unwrap(),
    )
    .unwrap();
    c.bench_function("integrate_marcus 1e4 steps", |b| {
        b.iter(|| integrate_marcus(&marcus, &p, black_box(&x0), &grid).unwrap())
    });
}

fn cohomology(c: &mut Criterion) {
    let p = sample_path(&triplet(), (-11.0, 1.0), 1e-2, 5).unwrap();
    let grid = TimeGrid::new(&p, 0.0, 1.0, 1e-2).unwrap();
    let sys = SystemSpec::linear(Matrix::from_element(1, 1, -0.5), vec![Matrix::identity(1, 1)]).unwrap();
    let lattice = AnchorLattice::uniform(&[-2.0], &[2.0], &[5]).unwrap();
    let opts = CohomologyOptions::with_tail(10.0);
    let mut g = c.benchmark_group("cohomology");
    g.sample_size(10);
    g.bench_function("build 5 anchors, T_h = 10", |b| {
        b.iter(|| build_cohomology(&sys, &p, &lattice, &grid, &opts).unwrap())
    });
    g.finish();
}

criterion_group!(benches, paths, integrators, cohomology);
criterion_main!(benches);
