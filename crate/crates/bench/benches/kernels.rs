use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use patchmg::fem::{assemble, AssemblyOptions};
use patchmg::kron::kron_apply;
use patchmg::mesh::unit_cartesian_patch;
use patchmg::patches::LocalSolve;
use patchmg::plocal::{FdmSolver, LocalVariant};
use patchmg_bench::{kron_fixture, patch_solver, ramp};

fn kron(c: &mut Criterion) {
    let mut g = c.benchmark_group("kron_apply");
    for (dim, n) in [(2, 8), (2, 12), (3, 8)] {
        let (op, x) = kron_fixture(dim, n);
        g.bench_with_input(BenchmarkId::new(format!("{dim}d"), n), &x, |b, x| {
            b.iter(|| kron_apply(&op, black_box(x)).unwrap())
        });
    }
    g.finish();
}

fn assembly(c: &mut Criterion) {
    let mesh = unit_cartesian_patch(2, 0.5).unwrap();
    let mut g = c.benchmark_group("assemble_patch");
    for p in [2, 4, 7] {
        g.bench_function(BenchmarkId::from_parameter(p), |b| {
            b.iter(|| assemble(black_box(&mesh), p, AssemblyOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn local_solves(c: &mut Criterion) {
    let mut g = c.benchmark_group("local_solve");
    for p in [2, 4, 7] {
        for (name, variant) in [("bs_pmg", LocalVariant::BsPmg), ("block", LocalVariant::Block), ("exact", LocalVariant::ExactDense)] {
            let solver = patch_solver(2, p, variant);
            let r = ramp(solver.operator().n_total());
            g.bench_with_input(BenchmarkId::new(name, p), &r, |b, r| b.iter(|| solver.solve(black_box(r)).unwrap()));
        }
    }
    g.finish();
}

fn fdm(c: &mut Criterion) {
    let mut g = c.benchmark_group("fdm_velocity");
    for (dim, p) in [(2, 7), (3, 4)] {
        let mesh = unit_cartesian_patch(dim, 0.5).unwrap();
        let op = assemble(&mesh, p, AssemblyOptions { with_pressure: false, ..Default::default() }).unwrap();
        let solver = FdmSolver::new(&mesh, &op).unwrap();
        let r = ramp(op.n_u());
        g.bench_with_input(BenchmarkId::new(format!("{dim}d"), p), &r, |b, r| b.iter(|| solver.solve(black_box(r)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, kron, assembly, local_solves, fdm);
criterion_main!(benches);
