//! Fixtures shared by the criterion benchmarks.

use patchmg::experiment::{build_patch_solver, PatchCase, PatchType};
use patchmg::fem::PressureSpace;
use patchmg::kron::{KroneckerOp, Matrix1D};
use patchmg::plocal::{LocalSolver, LocalSolverConfig, LocalVariant};

/// Undistorted 2D Cartesian patch of degree `p` with unit coefficients.
pub fn cartesian_case(dim: usize, p: usize) -> PatchCase {
    PatchCase {
        dim,
        p,
        patch_type: PatchType::Cartesian,
        delta: 0.0,
        mu: 1.0,
        rho: 0.0,
        pressure_space: PressureSpace::TotalDegree,
    }
}

pub fn patch_solver(dim: usize, p: usize, variant: LocalVariant) -> LocalSolver {
    let cfg = LocalSolverConfig { variant, ..Default::default() };
    build_patch_solver(&cartesian_case(dim, p), &cfg, 0).expect("benchmark patch builds").0
}

/// `dim` identical dense `n × n` factors with smooth entries.
pub fn kron_fixture(dim: usize, n: usize) -> (KroneckerOp, Vec<f64>) {
    let f = Matrix1D::from_fn(n, n, |i, j| ((i * n + j) as f64 * 0.37).sin());
    let op = KroneckerOp::new(vec![f; dim]);
    let x = (0..op.cols()).map(|i| (i as f64).cos()).collect();
    (op, x)
}

pub fn ramp(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i % 17) as f64 - 8.0) / 8.0).collect()
}
