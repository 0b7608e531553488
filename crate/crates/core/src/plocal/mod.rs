//! Local patch solvers: p-multigrid with Braess–Sarazin smoothing, block
//! preconditioners, blockwise elimination and dense reference solvers.

mod block;
mod dense;
mod fdm;
mod hierarchy;
mod smoother;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use block::{block_preconditioner_apply, blockwise_elimination, local_block_gmres, VelocityInverse};
pub use dense::{closed_form_bs_inverse, closed_form_vcycle, ExactSaddle, ExactVelocity};
pub use fdm::{fdm_solve, FdmSolver};
pub use hierarchy::{build_p_hierarchy, degree_ladder, eig_estimate, PHierarchy, PLevel, EIG_STEPS};
pub use smoother::{bs_smooth, p_vcycle, velocity_vcycle, BSConfig, SchurSolver};

pub use crate::fem::{CounterSnapshot, OpCounters};

use crate::error::{Error, Result};
use crate::fem::StokesOperator;
use crate::patches::{LocalSolve, PatchSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LocalVariant {
    /// p-multigrid V-cycle with Braess–Sarazin smoothing.
    #[default]
    BsPmg,
    /// Block preconditioner (velocity inverse + pressure mass Schur).
    Block,
    /// FGMRES to a tolerance, preconditioned by the block preconditioner.
    BlockGmres,
    /// Exact velocity solves and CG on the Schur complement.
    BlockwiseFdm,
    /// Dense direct solve.
    ExactDense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VelocityKind {
    #[default]
    Pmg,
    Exact,
    Fdm,
}

/// Everything needed to build a local solver on one patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalSolverConfig {
    pub variant: LocalVariant,
    /// Local Richardson iterations around the chosen preconditioner.
    pub n_mg: usize,
    pub bs: BSConfig,
    /// Velocity inverse for the block variants.
    pub velocity: VelocityKind,
    /// Jacobi steps per level in the velocity V-cycle.
    pub velocity_m: usize,
    pub velocity_omega: f64,
    /// Velocity V-cycles per velocity inverse.
    pub n_v: usize,
    /// Tolerance and cap of inner iterative solves (GMRES or Schur CG).
    pub inner_tol: f64,
    pub inner_max_it: usize,
}

impl Default for LocalSolverConfig {
    fn default() -> Self {
        Self {
            variant: LocalVariant::BsPmg,
            n_mg: 1,
            bs: BSConfig::default(),
            velocity: VelocityKind::Pmg,
            velocity_m: 1,
            velocity_omega: 0.7,
            n_v: 1,
            inner_tol: 1e-8,
            inner_max_it: 150,
        }
    }
}

impl LocalSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mg == 0 {
            return Err(Error::Config("n_mg must be at least 1".into()));
        }
        if self.n_v == 0 || self.velocity_m == 0 {
            return Err(Error::Config("velocity cycles and smoothing steps must be at least 1".into()));
        }
        if !(self.velocity_omega > 0.0 && self.velocity_omega <= 1.0) {
            return Err(Error::Config(format!("velocity_omega must lie in (0, 1], got {}", self.velocity_omega)));
        }
        if self.inner_max_it == 0 || !(self.inner_tol > 0.0) {
            return Err(Error::Config("inner solver needs a positive tolerance and cap".into()));
        }
        self.bs.validate()
    }
}

#[derive(Debug, Clone)]
enum Prepared {
    Bs(Box<PHierarchy>),
    Block(VelocityInverse),
    BlockGmres(VelocityInverse),
    Blockwise(VelocityInverse),
    Exact(Box<ExactSaddle>),
}

/// A local solver bound to one patch.
#[derive(Debug, Clone)]
pub struct LocalSolver {
    system: PatchSystem,
    cfg: LocalSolverConfig,
    prepared: Prepared,
}

fn velocity_inverse(sys: &PatchSystem, cfg: &LocalSolverConfig) -> Result<VelocityInverse> {
    Ok(match cfg.velocity {
        VelocityKind::Pmg => VelocityInverse::PMg {
            hierarchy: Box::new(PHierarchy::new(&sys.mesh, Arc::clone(&sys.op), cfg.bs.omega)?),
            m: cfg.velocity_m,
            omega: cfg.velocity_omega,
            n_v: cfg.n_v,
        },
        VelocityKind::Exact => VelocityInverse::Exact(ExactVelocity::new(&sys.op)?),
        VelocityKind::Fdm => VelocityInverse::Fdm(FdmSolver::new(&sys.mesh, &sys.op)?),
    })
}

impl LocalSolver {
    pub fn new(system: PatchSystem, cfg: &LocalSolverConfig) -> Result<Self> {
        cfg.validate()?;
        let prepared = match cfg.variant {
            LocalVariant::BsPmg => {
                Prepared::Bs(Box::new(PHierarchy::new(&system.mesh, Arc::clone(&system.op), cfg.bs.omega)?))
            }
            LocalVariant::Block => Prepared::Block(velocity_inverse(&system, cfg)?),
            LocalVariant::BlockGmres => Prepared::BlockGmres(velocity_inverse(&system, cfg)?),
            LocalVariant::BlockwiseFdm => {
                let c = LocalSolverConfig { velocity: VelocityKind::Fdm, ..*cfg };
                Prepared::Blockwise(velocity_inverse(&system, &c)?)
            }
            LocalVariant::ExactDense => Prepared::Exact(Box::new(ExactSaddle::new(&system.op)?)),
        };
        Ok(Self { system, cfg: *cfg, prepared })
    }

    pub fn config(&self) -> &LocalSolverConfig {
        &self.cfg
    }

    pub fn operator(&self) -> &StokesOperator {
        &self.system.op
    }

    pub fn hierarchy(&self) -> Option<&PHierarchy> {
        match &self.prepared {
            Prepared::Bs(h) => Some(h),
            Prepared::Block(VelocityInverse::PMg { hierarchy, .. }) => Some(hierarchy),
            _ => None,
        }
    }

    /// One application of the underlying preconditioner (a single V-cycle
    /// for the multigrid variants).
    pub fn precondition(&self, r: &[f64]) -> Result<Vec<f64>> {
        let op = &self.system.op;
        if r.len() != op.n_total() {
            return Err(Error::DimensionMismatch { context: "local solve", expected: op.n_total(), got: r.len() });
        }
        let mut d = match &self.prepared {
            Prepared::Bs(h) => p_vcycle(h, h.n_levels() - 1, r, &self.cfg.bs),
            Prepared::Block(v) => block_preconditioner_apply(op, v, r)?,
            Prepared::BlockGmres(v) => local_block_gmres(op, v, r, self.cfg.inner_tol, self.cfg.inner_max_it)?.0,
            Prepared::Blockwise(v) => blockwise_elimination(op, v, r, self.cfg.inner_tol, self.cfg.inner_max_it)?.0,
            Prepared::Exact(e) => e.solve(r),
        };
        op.project_mean_zero(&mut d[op.n_u()..]);
        Ok(d)
    }
}

/// `N_iter` steps of Richardson iteration preconditioned by `precond`,
/// with the first step taken from a zero guess without an operator
/// application.
pub fn local_solve_richardson<P>(op: &StokesOperator, mut precond: P, r: &[f64], n_iter: usize) -> Result<Vec<f64>>
where
    P: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if n_iter == 0 {
        return Err(Error::InvalidArgument("n_iter must be at least 1".into()));
    }
    let mut d = precond(r)?;
    for _ in 1..n_iter {
        let ad = op.apply_block(&d)?;
        let res: Vec<f64> = r.iter().zip(&ad).map(|(a, b)| a - b).collect();
        let c = precond(&res)?;
        d.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
    }
    Ok(d)
}

impl LocalSolve for LocalSolver {
    fn system(&self) -> &PatchSystem {
        &self.system
    }

    fn solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        let n = if matches!(self.prepared, Prepared::Exact(_)) { 1 } else { self.cfg.n_mg };
        local_solve_richardson(&self.system.op, |x| self.precondition(x), r, n)
    }
}
