use nalgebra::{DMatrix, DVector};
use patchmg::experiment::{build_global_hierarchy, build_patch_mesh, build_patch_solver, GlobalCase, PatchCase, PatchType};
use patchmg::fem::{assemble, AssemblyOptions, PressureSpace, StokesOperator};
use patchmg::patches::{enumerate_patches, extract_patch_system, local_update};
use patchmg::plocal::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn case(dim: usize, p: usize, delta: f64) -> PatchCase {
    PatchCase {
        dim,
        p,
        patch_type: PatchType::Cartesian,
        delta,
        mu: 1.0,
        rho: 0.0,
        pressure_space: PressureSpace::TotalDegree,
    }
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

fn dense_apply(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(x)).as_slice().to_vec()
}

fn bs_solver(c: &PatchCase, m: usize) -> LocalSolver {
    let mut cfg = LocalSolverConfig::default();
    cfg.bs.m = m;
    build_patch_solver(c, &cfg, 3).unwrap().0
}

#[test]
fn braess_sarazin_step_matches_closed_form() {
    for (p, delta) in [(2, 0.0), (3, 0.2), (5, 0.35)] {
        let solver = bs_solver(&case(2, p, delta), 1);
        let h = solver.hierarchy().unwrap();
        let k = h.n_levels() - 1;
        let lvl = &h.levels[k];
        let dense = closed_form_bs_inverse(&lvl.op, h.omega, lvl.omega_s);
        for seed in 0..3 {
            let r = random_vec(lvl.op.n_total(), seed);
            let got = bs_smooth(h, k, &r, &BSConfig::default());
            assert!(rel_diff(&got, &dense_apply(&dense, &r)) < 1e-12, "p={p}");
        }
    }
}

#[test]
fn v_cycle_matches_closed_form() {
    for (p, ladder) in [(3, vec![1, 3]), (7, vec![1, 3, 7])] {
        let solver = bs_solver(&case(2, p, 0.1), 1);
        let h = solver.hierarchy().unwrap();
        assert_eq!(h.degrees, ladder);
        let dense = closed_form_vcycle(h);
        let top = h.n_levels() - 1;
        for seed in 0..3 {
            let r = random_vec(h.levels[top].op.n_total(), 10 + seed);
            let got = p_vcycle(h, top, &r, &BSConfig::default());
            assert!(rel_diff(&got, &dense_apply(&dense, &r)) < 1e-12, "p={p}");
        }
    }
}

#[test]
fn fdm_matches_dense_velocity_inverse() {
    for (dim, p, rho) in [(2, 2, 0.0), (2, 5, 0.0), (2, 9, 1.0), (3, 2, 0.0), (3, 4, 2.5)] {
        let mut c = case(dim, p, 0.0);
        c.rho = rho;
        c.mu = 1.0;
        let (mut mesh, _) = build_patch_mesh(&c, 0).unwrap();
        for cell in mesh.cells_mut() {
            cell.viscosity = 3.0;
        }
        let opts = AssemblyOptions { include_mass: rho > 0.0, with_pressure: false, ..Default::default() };
        let op = assemble(&mesh, p, opts).unwrap();
        let fdm = FdmSolver::new(&mesh, &op).unwrap();
        let exact = ExactVelocity::new(&op).unwrap();
        let r = random_vec(op.n_u(), p as u64);
        assert!(rel_diff(&fdm.solve(&r).unwrap(), &exact.solve(&r)) < 1e-10, "dim={dim} p={p}");
    }
}

#[test]
fn fdm_rejects_distorted_patches() {
    let (mesh, _) = build_patch_mesh(&case(2, 3, 0.2), 1).unwrap();
    let op = assemble(&mesh, 3, AssemblyOptions::default()).unwrap();
    assert!(matches!(FdmSolver::new(&mesh, &op), Err(patchmg::Error::NonSeparable(_))));
}

#[test]
fn finest_level_counters_per_cycle() {
    for m in [1, 2] {
        for p in [3, 7] {
            let solver = bs_solver(&case(2, p, 0.0), m);
            let h = solver.hierarchy().unwrap();
            let top = h.n_levels() - 1;
            let op = &h.levels[top].op;
            let r = random_vec(op.n_total(), 5);
            let cfg = BSConfig { m, ..Default::default() };
            op.counters.reset();
            p_vcycle(h, top, &r, &cfg);
            let c = op.counters.snapshot();
            let (na, nb) = (2 * m as u64 + 1, 4 * m as u64 + 1);
            assert_eq!((c.n_a, c.n_b, c.n_bt), (na, nb, nb), "m={m} p={p}");
        }
    }
}

fn dense_blocks(op: &StokesOperator) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let a = op.a.to_dense();
    let b = op.b.to_dense();
    let np = op.n_p();
    let mut mp = DMatrix::zeros(np, np);
    for j in 0..np {
        let mut e = vec![0.0; np];
        e[j] = 1.0;
        mp.set_column(j, &DVector::from_vec(op.pressure_mass_apply(&e)));
    }
    (a, b, mp)
}

#[test]
fn block_preconditioner_matches_elimination_formula() {
    let (mesh, _) = build_patch_mesh(&case(2, 4, 0.2), 2).unwrap();
    let op = assemble(&mesh, 4, AssemblyOptions::default()).unwrap();
    let (a, b, mp) = dense_blocks(&op);
    let ainv = a.clone().try_inverse().unwrap();
    let minv = mp.try_inverse().unwrap();
    let (nu, np) = (op.n_u(), op.n_p());
    let mut expect = DMatrix::zeros(nu + np, nu + np);
    let bai = &b * &ainv;
    expect.view_mut((0, 0), (nu, nu)).copy_from(&(&ainv - bai.transpose() * &minv * &bai));
    expect.view_mut((0, nu), (nu, np)).copy_from(&(bai.transpose() * &minv));
    expect.view_mut((nu, 0), (np, nu)).copy_from(&(&minv * &bai));
    expect.view_mut((nu, nu), (np, np)).copy_from(&(-&minv));
    let vinv = VelocityInverse::Exact(ExactVelocity::new(&op).unwrap());
    let r = random_vec(nu + np, 8);
    let got = block_preconditioner_apply(&op, &vinv, &r).unwrap();
    assert!(rel_diff(&got, &dense_apply(&expect, &r)) < 1e-11);
}

#[test]
fn blockwise_elimination_solves_the_patch_problem() {
    let (mesh, _) = build_patch_mesh(&case(2, 5, 0.0), 0).unwrap();
    let op = assemble(&mesh, 5, AssemblyOptions::default()).unwrap();
    let vinv = VelocityInverse::Fdm(FdmSolver::new(&mesh, &op).unwrap());
    let mut r = random_vec(op.n_total(), 4);
    op.project_residual(&mut r[op.n_u()..]);
    let (x, it) = blockwise_elimination(&op, &vinv, &r, 1e-12, 200).unwrap();
    assert!(it > 1);
    let res = op.residual(&r, &x).unwrap();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(norm(&res) < 1e-9 * norm(&r));
}

#[test]
fn v_cycle_is_linear_with_richardson_inner_solve() {
    let solver = bs_solver(&case(2, 4, 0.25), 1);
    let h = solver.hierarchy().unwrap();
    let top = h.n_levels() - 1;
    let n = h.levels[top].op.n_total();
    let (r1, r2) = (random_vec(n, 1), random_vec(n, 2));
    let combo: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| 2.5 * a - 0.75 * b).collect();
    let cfg = BSConfig::default();
    let v1 = p_vcycle(h, top, &r1, &cfg);
    let v2 = p_vcycle(h, top, &r2, &cfg);
    let lin: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| 2.5 * a - 0.75 * b).collect();
    assert!(rel_diff(&p_vcycle(h, top, &combo, &cfg), &lin) < 1e-12);
}

fn jump_case(mu: f64, levels: usize) -> GlobalCase {
    GlobalCase { p: 2, mu, levels, ..Default::default() }
}

#[test]
fn patch_corrections_use_a_viscosity_weighted_gauge() {
    for mu in [1.0, 1e6] {
        let (hier, _, _) = build_global_hierarchy(&jump_case(mu, 1), 0).unwrap();
        let mesh = hier.finest();
        let global = assemble(mesh, 2, AssemblyOptions::default()).unwrap();
        let cfg = LocalSolverConfig { variant: LocalVariant::ExactDense, ..Default::default() };
        let b = vec![0.0; global.n_total()];
        let u = random_vec(global.n_total(), 6);
        for patch in enumerate_patches(mesh) {
            let sys = extract_patch_system(mesh, &patch, &global, false).unwrap();
            let solver = LocalSolver::new(sys, &cfg).unwrap();
            let sys = patchmg::patches::LocalSolve::system(&solver);
            let d = local_update(&solver, &global, &u, &b).unwrap();
            let dp = &d[sys.op.n_u()..];
            let weighted: f64 = dp.iter().zip(&sys.gauge_weights).map(|(a, w)| a * w).sum();
            assert!(weighted.abs() < 1e-10 * dp.iter().map(|v| v.abs()).fold(1.0, f64::max));
            if mu == 1.0 {
                let plain: f64 = dp.iter().zip(&sys.op.mean_weights).map(|(a, w)| a * w).sum();
                assert!(plain.abs() < 1e-12);
            }
        }
    }
}

#[test]
fn exact_saddle_is_accurate_under_a_viscosity_jump() {
    for mu in [1.0, 1e6] {
        let (hier, _, _) = build_global_hierarchy(&jump_case(mu, 2), 0).unwrap();
        let op = assemble(hier.finest(), 2, AssemblyOptions::default()).unwrap();
        let solver = ExactSaddle::new(&op).unwrap();
        let mut r = random_vec(op.n_total(), 12);
        op.project_residual(&mut r[op.n_u()..]);
        let x = solver.solve(&r);
        let res = op.residual(&r, &x).unwrap();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(norm(&res) < 1e-9 * norm(&r), "mu={mu}: {}", norm(&res) / norm(&r));
        let mean: f64 = x[op.n_u()..].iter().zip(&op.mean_weights).map(|(a, w)| a * w).sum();
        assert!(mean.abs() < 1e-9 * norm(&x));
        // idempotent on mean-zero data
        let mut y = random_vec(op.n_total(), 13);
        op.project_mean_zero(&mut y[op.n_u()..]);
        let back = solver.solve(&op.apply_block(&y).unwrap());
        assert!(rel_diff(&back, &y) < 1e-8, "mu={mu}");
    }
}
