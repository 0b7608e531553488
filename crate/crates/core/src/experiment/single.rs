use serde::{Deserialize, Serialize};

use super::seeds::{random_initial_guess, resample_seed, sub_seed};
use crate::error::{Error, Result};
use crate::fem::{assemble, AssemblyOptions, CounterSnapshot, PressureSpace};
use crate::krylov::{fgmres, SolveStats};
use crate::mesh::{distort, simplicial_patch, unit_cartesian_patch, MeshLevel};
use crate::patches::{enumerate_patches, extract_patch_system, LocalSolve};
use crate::plocal::{LocalSolver, LocalSolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PatchType {
    #[default]
    Cartesian,
    Simplicial,
}

/// Geometry and coefficients of one single-patch problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchCase {
    pub dim: usize,
    pub p: usize,
    pub patch_type: PatchType,
    pub delta: f64,
    /// Viscosity of the first patch cell; the others carry 1.
    pub mu: f64,
    /// Density of every cell; a positive value adds the mass term.
    pub rho: f64,
    pub pressure_space: PressureSpace,
}

#[derive(Debug, Clone)]
pub struct PatchRun {
    pub stats: SolveStats,
    /// Distortion draws rejected as degenerate.
    pub resamples: usize,
    /// Operator applications on the patch operator during the solve.
    pub counters: CounterSnapshot,
}

pub const MAX_RESAMPLES: usize = 100;

/// Builds and distorts the patch mesh, redrawing degenerate distortions.
pub fn build_patch_mesh(case: &PatchCase, seed: u64) -> Result<(MeshLevel, usize)> {
    let mut base = match case.patch_type {
        PatchType::Cartesian => unit_cartesian_patch(case.dim, 0.5)?,
        PatchType::Simplicial => simplicial_patch(case.dim)?,
    };
    if !(case.mu > 0.0) || case.rho < 0.0 {
        return Err(Error::Config("viscosity must be positive and density nonnegative".into()));
    }
    base.cells_mut()[0].viscosity = case.mu;
    for c in base.cells_mut() {
        c.density = case.rho;
    }
    for attempt in 0..=MAX_RESAMPLES {
        let s = if attempt == 0 { seed } else { resample_seed(seed, attempt as u64) };
        match distort(&base, case.delta, s, false) {
            Ok(m) => return Ok((m, attempt)),
            Err(Error::DegenerateCell { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Config(format!("distortion {} produced only degenerate meshes", case.delta)))
}

/// Builds the local solver for one realization of a patch case.
pub fn build_patch_solver(case: &PatchCase, cfg: &LocalSolverConfig, seed: u64) -> Result<(LocalSolver, usize)> {
    let (mesh, resamples) = build_patch_mesh(case, seed)?;
    let opts = AssemblyOptions { include_mass: case.rho > 0.0, pressure_space: case.pressure_space, ..Default::default() };
    let op = assemble(&mesh, case.p, opts)?;
    let patch = enumerate_patches(&mesh)
        .into_iter()
        .next()
        .ok_or_else(|| Error::Config("patch mesh has no interior vertex".into()))?;
    let sys = extract_patch_system(&mesh, &patch, &op, false)?;
    Ok((LocalSolver::new(sys, cfg)?, resamples))
}

/// FGMRES on the patch problem with zero right-hand side and a random
/// initial guess, preconditioned by the local solver.
pub fn run_patch_case(case: &PatchCase, cfg: &LocalSolverConfig, seed: u64, tol: f64, max_it: usize) -> Result<PatchRun> {
    let (solver, resamples) = build_patch_solver(case, cfg, seed)?;
    let op = solver.operator();
    let x0 = random_initial_guess(op, sub_seed(seed, "initial-guess", 0));
    let b = vec![0.0; op.n_total()];
    let before = op.counters.snapshot();
    let (_, stats) = fgmres(|x| op.apply_block(x), |r| solver.solve(r), &b, &x0, tol, max_it)?;
    let counters = op.counters.snapshot().since(&before);
    Ok(PatchRun { stats, resamples, counters })
}
