//! Geometric multigrid V-cycle with multiplicative vertex-patch smoothing.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::random_initial_guess;
use crate::fem::{assemble, h_transfer, AssemblyOptions, BlockTransfer, StokesOperator};
use crate::krylov::{fgmres, SolveStats};
use crate::mesh::{MeshHierarchy, MeshLevel, Point};
use crate::patches::{enumerate_patches_ordered, extract_patch_system, smoother_sweep};
use crate::plocal::{ExactSaddle, LocalSolver, LocalSolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmgConfig {
    pub local: LocalSolverConfig,
    pub pre_smooth: usize,
    pub post_smooth: usize,
    /// Sweep the patches in reverse order during post-smoothing.
    pub reverse_post: bool,
}

impl Default for GmgConfig {
    fn default() -> Self {
        Self { local: LocalSolverConfig::default(), pre_smooth: 1, post_smooth: 1, reverse_post: true }
    }
}

struct Level {
    op: Arc<StokesOperator>,
    solvers: Vec<LocalSolver>,
}

/// V-cycle over a mesh hierarchy with patch smoothers on every level above
/// the coarsest, which is solved directly.
pub struct GMGPreconditioner {
    levels: Vec<Level>,
    /// `transfers[l - 1]` maps level `l - 1` to level `l`.
    transfers: Vec<BlockTransfer>,
    coarse: ExactSaddle,
    cfg: GmgConfig,
}

impl std::fmt::Debug for GMGPreconditioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GMGPreconditioner")
            .field("levels", &self.levels.len())
            .field("patches", &self.levels.iter().map(|l| l.solvers.len()).collect::<Vec<_>>())
            .finish()
    }
}

fn build_solvers(mesh: &MeshLevel, order: &[Point], op: &StokesOperator, cfg: &LocalSolverConfig) -> Result<Vec<LocalSolver>> {
    enumerate_patches_ordered(mesh, order)
        .par_iter()
        .map(|patch| {
            let sys = extract_patch_system(mesh, patch, op, false)?;
            LocalSolver::new(sys, cfg).map_err(|e| Error::LocalSolve { patch: patch.center, source: Box::new(e) })
        })
        .collect()
}

impl GMGPreconditioner {
    /// `finest_order` gives the vertex coordinates that fix the patch order
    /// on the finest level (the undistorted positions for a distorted mesh).
    pub fn new(
        hier: &MeshHierarchy,
        degree: usize,
        opts: AssemblyOptions,
        finest_order: Option<&[Point]>,
        cfg: &GmgConfig,
    ) -> Result<Self> {
        cfg.local.validate()?;
        if cfg.pre_smooth + cfg.post_smooth == 0 {
            return Err(Error::Config("at least one smoothing sweep is required".into()));
        }
        let meshes = hier.levels();
        let ops = meshes
            .iter()
            .map(|m| assemble(m, degree, opts).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        let mut transfers = Vec::with_capacity(meshes.len().saturating_sub(1));
        for l in 1..meshes.len() {
            let parent = meshes[l]
                .parent_map()
                .ok_or_else(|| Error::InvalidArgument(format!("mesh level {l} has no parent map")))?;
            transfers.push(h_transfer(&ops[l], &ops[l - 1], parent)?);
        }
        let coarse = ExactSaddle::new(&ops[0])?;
        let last = meshes.len() - 1;
        let mut levels = Vec::with_capacity(meshes.len());
        for (l, (mesh, op)) in meshes.iter().zip(ops).enumerate() {
            let solvers = if l == 0 {
                Vec::new()
            } else {
                let order = if l == last { finest_order.unwrap_or(mesh.vertices()) } else { mesh.vertices() };
                build_solvers(mesh, order, &op, &cfg.local)?
            };
            levels.push(Level { op, solvers });
        }
        Ok(Self { levels, transfers, coarse, cfg: *cfg })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn operator(&self, level: usize) -> &StokesOperator {
        &self.levels[level].op
    }

    pub fn finest(&self) -> &StokesOperator {
        &self.levels.last().unwrap().op
    }

    pub fn n_patches(&self, level: usize) -> usize {
        self.levels[level].solvers.len()
    }

    /// One V-cycle applied to a finest-level residual.
    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        let top = self.levels.len() - 1;
        let op = &self.levels[top].op;
        if r.len() != op.n_total() {
            return Err(Error::DimensionMismatch { context: "gmg residual", expected: op.n_total(), got: r.len() });
        }
        let mut d = self.vcycle(top, r)?;
        op.project_mean_zero(&mut d[op.n_u()..]);
        Ok(d)
    }

    fn vcycle(&self, l: usize, r: &[f64]) -> Result<Vec<f64>> {
        if l == 0 {
            return Ok(self.coarse.solve(r));
        }
        let level = &self.levels[l];
        let op = &level.op;
        let mut d = vec![0.0; op.n_total()];
        for _ in 0..self.cfg.pre_smooth {
            smoother_sweep(&level.solvers, op, &mut d, r, false)?;
        }
        let res = op.residual(r, &d)?;
        let t = &self.transfers[l - 1];
        let dc = self.vcycle(l - 1, &t.restrict(&res))?;
        t.prolongate_add(&dc, &mut d);
        for _ in 0..self.cfg.post_smooth {
            smoother_sweep(&level.solvers, op, &mut d, r, self.cfg.reverse_post)?;
        }
        Ok(d)
    }
}

/// Outcome of one global solve; `nc` marks non-convergence or a local failure.
#[derive(Debug, Clone)]
pub struct GlobalRun {
    pub stats: SolveStats,
    pub nc: bool,
    pub error: Option<String>,
}

/// FGMRES on `𝒜 x = 0` from a seeded random guess, preconditioned by one
/// V-cycle per iteration.
pub fn solve_global(gmg: &GMGPreconditioner, tol: f64, max_it: usize, seed: u64) -> GlobalRun {
    let op = gmg.finest();
    let x0 = random_initial_guess(op, seed);
    let b = vec![0.0; op.n_total()];
    match fgmres(|x| op.apply_block(x), |r| gmg.apply(r), &b, &x0, tol, max_it) {
        Ok((_, stats)) => GlobalRun { nc: !stats.converged, stats, error: None },
        Err(e) => GlobalRun {
            stats: SolveStats { iterations: max_it, converged: false, final_residual: f64::NAN, history: Vec::new() },
            nc: true,
            error: Some(e.to_string()),
        },
    }
}
