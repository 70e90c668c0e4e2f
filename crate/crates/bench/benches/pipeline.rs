use cfclass_bench::fixture;
use cfclass_core::learners::LearnerSpec;
use cfclass_core::nuisance::fit_nuisances;
use cfclass_core::optimizer::{solve, Program, SolverOptions};
use cfclass_core::risk::{evaluate, RiskObjective};
use cfclass_core::split_folds;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

fn risk(c: &mut Criterion) {
    let mut group = c.benchmark_group("risk");
    for n in [1000, 10_000] {
        let f = fixture(n, 1);
        let beta = DVector::from_element(f.basis.ncols(), 0.05);
        group.bench_with_input(BenchmarkId::new("gradient", n), &n, |b, _| {
            b.iter(|| evaluate(black_box(&beta), &f.targets, &f.basis, false).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("hessian", n), &n, |b, _| {
            b.iter(|| evaluate(black_box(&beta), &f.targets, &f.basis, true).unwrap())
        });
    }
    group.finish();
}

fn nuisances(c: &mut Criterion) {
    let f = fixture(5000, 2);
    let folds = split_folds(5000, 2, 3).unwrap();
    let mut group = c.benchmark_group("nuisance");
    group.sample_size(10);
    for (name, spec) in [
        ("logistic-linear", LearnerSpec::LogisticLinear { lambda: 1e-3 }),
        ("logistic-quadratic", LearnerSpec::default()),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| {
                fit_nuisances(&f.sim.dataset, &folds, &LearnerSpec::LogisticLinear { lambda: 1e-3 }, &spec, 0.01, 1, None)
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn solver(c: &mut Criterion) {
    let f = fixture(5000, 4);
    let objective = RiskObjective::new(&f.basis, &f.targets).unwrap();
    let program = Program::new(f.basis.ncols()).with_symmetric_box(1.0);
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    for starts in [1, 8] {
        let opts = SolverOptions {
            starts,
            ..SolverOptions::default()
        };
        group.bench_with_input(BenchmarkId::new("box", starts), &starts, |b, _| {
            b.iter(|| solve(&program, &objective, &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, risk, nuisances, solver);
criterion_main!(benches);
