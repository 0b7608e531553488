use super::seeds::resample_seed;
use super::single::MAX_RESAMPLES;
use crate::error::{Error, Result};
use crate::fem::{AssemblyOptions, PressureSpace};
use crate::gmg::{solve_global, GMGPreconditioner, GlobalRun, GmgConfig};
use crate::mesh::{build_hierarchy, set_viscosity_region, structured_grid, MeshHierarchy, Point};

/// Cells per side of the coarse grid; the middle cell carries the viscosity jump.
pub const COARSE_CELLS: usize = 3;
pub const CENTER_CELL: usize = 4;

/// Global test problem on the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalCase {
    pub p: usize,
    pub delta: f64,
    /// Viscosity of the central coarse cell and its descendants.
    pub mu: f64,
    pub levels: usize,
    pub rho: f64,
    pub pressure_space: PressureSpace,
}

impl Default for GlobalCase {
    fn default() -> Self {
        Self { p: 2, delta: 0.0, mu: 1.0, levels: 4, rho: 0.0, pressure_space: PressureSpace::TotalDegree }
    }
}

/// Mesh hierarchy with the finest level distorted (boundary fixed), plus
/// the undistorted finest coordinates and the number of rejected draws.
pub fn build_global_hierarchy(case: &GlobalCase, seed: u64) -> Result<(MeshHierarchy, Vec<Point>, usize)> {
    if case.levels == 0 {
        return Err(Error::Config("levels must be at least 1".into()));
    }
    let mut hier = build_hierarchy(structured_grid(2, COARSE_CELLS, 1.0)?, case.levels)?;
    if case.mu != 1.0 {
        set_viscosity_region(&mut hier, CENTER_CELL, case.mu)?;
    }
    if case.rho != 0.0 {
        if case.rho < 0.0 {
            return Err(Error::Config("density must be nonnegative".into()));
        }
        hier.set_density(case.rho);
    }
    let order = hier.finest().vertices().to_vec();
    for attempt in 0..=MAX_RESAMPLES {
        let s = if attempt == 0 { seed } else { resample_seed(seed, attempt as u64) };
        let mut h = hier.clone();
        match h.distort_finest(case.delta, s) {
            Ok(()) => return Ok((h, order, attempt)),
            Err(Error::DegenerateCell { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Config(format!("distortion {} produced only degenerate meshes", case.delta)))
}

pub fn build_global_preconditioner(case: &GlobalCase, cfg: &GmgConfig, seed: u64) -> Result<(GMGPreconditioner, usize)> {
    let (hier, order, resamples) = build_global_hierarchy(case, seed)?;
    let opts = AssemblyOptions { include_mass: case.rho > 0.0, pressure_space: case.pressure_space, ..Default::default() };
    Ok((GMGPreconditioner::new(&hier, case.p, opts, Some(&order), cfg)?, resamples))
}

#[derive(Debug, Clone)]
pub struct GlobalCaseRun {
    pub run: GlobalRun,
    /// Distortion draws rejected as degenerate.
    pub resamples: usize,
}

/// Builds the preconditioner and runs the outer FGMRES; the mesh and the
/// initial guess use independent seeds derived from `seed`.
pub fn run_global_case(case: &GlobalCase, cfg: &GmgConfig, seed: u64, tol: f64, max_it: usize) -> Result<GlobalCaseRun> {
    let (gmg, resamples) = build_global_preconditioner(case, cfg, seed)?;
    let run = solve_global(&gmg, tol, max_it, super::seeds::sub_seed(seed, "initial-guess", 0));
    Ok(GlobalCaseRun { run, resamples })
}
