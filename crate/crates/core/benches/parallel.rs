//! Single worker against the default rayon pool on the data-parallel kernels.
//! Build with `--no-default-features` to time the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stokes_ocp::bench::example1;
use stokes_ocp::fem::{assemble_velocity_stiffness, l2_error_velocity};
use stokes_ocp::ocp::{assemble_adjoint_weight_columns, build_preconditioner, OcpProblem};
use stokes_ocp::par;
use stokes_ocp::stokes::TimeGrid;
use stokes_ocp::Discretization;

fn pools() -> Vec<(&'static str, usize)> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![("one-worker", 1), ("default-pool", all)]
}

fn assembly(c: &mut Criterion) {
    let disc = Discretization::unit_square(64).expect("mesh");
    let u = vec![1.0; disc.n_u()];
    let mut group = c.benchmark_group("assembly-n64");
    for (name, workers) in pools() {
        group.bench_with_input(BenchmarkId::new("stiffness", name), &workers, |b, &w| {
            b.iter(|| par::with_workers(w, || assemble_velocity_stiffness(&disc.mesh, &disc.spaces).expect("assembly")))
        });
        group.bench_with_input(BenchmarkId::new("l2-error", name), &workers, |b, &w| {
            b.iter(|| {
                par::with_workers(w, || {
                    l2_error_velocity(&disc.mesh, &disc.spaces, &u, |x| [x[0], x[1]]).expect("norm")
                })
            })
        });
    }
    group.finish();
}

fn gram(c: &mut Criterion) {
    let disc = Discretization::unit_square(16).expect("mesh");
    let ex = example1();
    let problem = OcpProblem::new(ex.spec, &disc, TimeGrid::uniform(1.0, 60).expect("grid")).expect("problem");
    let cols = assemble_adjoint_weight_columns(&problem).expect("columns");
    let mut group = c.benchmark_group("schur-gram-n16-m60");
    group.sample_size(10);
    for (name, workers) in pools() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &workers, |b, &w| {
            b.iter(|| par::with_workers(w, || build_preconditioner(&problem, &cols).expect("preconditioner")))
        });
    }
    group.finish();
}

criterion_group!(benches, assembly, gram);
criterion_main!(benches);
