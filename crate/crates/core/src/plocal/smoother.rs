use serde::{Deserialize, Serialize};

use super::hierarchy::PHierarchy;
use crate::error::{Error, Result};
use crate::krylov::{cg, richardson};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchurSolver {
    #[default]
    Richardson,
    Cg,
}

/// Settings of the Braess–Sarazin smoother and the p-multigrid cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BSConfig {
    /// Smoothing steps per level.
    pub m: usize,
    /// Jacobi damping inside `Ã⁻¹ = ω diag(A)⁻¹`.
    pub omega: f64,
    pub schur_solver: SchurSolver,
    /// Inner Schur iterations.
    pub n_s: usize,
    /// Skip post-smoothing.
    pub half_cycle: bool,
    /// Scaling of every smoother correction inside the cycle.
    pub damping: f64,
}

impl Default for BSConfig {
    fn default() -> Self {
        Self { m: 1, omega: 0.7, schur_solver: SchurSolver::Richardson, n_s: 1, half_cycle: false, damping: 1.0 }
    }
}

impl BSConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.m) {
            return Err(Error::Config(format!("smoothing steps m must be 1 or 2, got {}", self.m)));
        }
        if self.n_s == 0 {
            return Err(Error::Config("n_s must be at least 1".into()));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::Config(format!("omega must lie in (0, 1], got {}", self.omega)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

/// One Braess–Sarazin step on level `k`: returns `𝒮ₖ⁻¹ r`.
pub fn bs_smooth(h: &PHierarchy, k: usize, r: &[f64], cfg: &BSConfig) -> Vec<f64> {
    let lvl = &h.levels[k];
    let op = &lvl.op;
    let (nu, np) = (op.n_u(), op.n_p());
    let w = h.omega;
    let (ru, rp) = r.split_at(nu);
    let du1: Vec<f64> = ru.iter().zip(&lvl.diag_a).map(|(r, d)| w * r / d).collect();
    let mut rhs = vec![0.0; np];
    op.apply_b(&du1, &mut rhs);
    for (s, p) in rhs.iter_mut().zip(rp) {
        *s -= p;
    }
    op.project_residual(&mut rhs);
    let schur = |x: &[f64]| {
        let mut t = vec![0.0; nu];
        op.apply_bt(x, &mut t);
        for (ti, d) in t.iter_mut().zip(&lvl.diag_a) {
            *ti *= w / d;
        }
        let mut y = vec![0.0; np];
        op.apply_b(&t, &mut y);
        y
    };
    let jac = |x: &[f64]| {
        let mut z: Vec<f64> = x.iter().zip(&lvl.diag_s).map(|(a, d)| a / d).collect();
        op.project_mean_zero(&mut z);
        z
    };
    let dp = match cfg.schur_solver {
        SchurSolver::Richardson => richardson(schur, jac, &rhs, cfg.n_s, lvl.omega_s),
        // fixed-step mode cannot fail on positive data; fall back to the Jacobi step otherwise
        SchurSolver::Cg => cg(schur, jac, &rhs, 0.0, cfg.n_s, true)
            .map(|(x, _)| x)
            .unwrap_or_else(|_| rhs.iter().zip(&lvl.diag_s).map(|(a, d)| lvl.omega_s * a / d).collect()),
    };
    let mut t = vec![0.0; nu];
    op.apply_bt(&dp, &mut t);
    let mut out = Vec::with_capacity(nu + np);
    out.extend(du1.iter().zip(&t).zip(&lvl.diag_a).map(|((u, t), d)| u - w * t / d));
    out.extend_from_slice(&dp);
    out
}

fn sub_residual(r: &[f64], ad: &[f64]) -> Vec<f64> {
    r.iter().zip(ad).map(|(a, b)| a - b).collect()
}

fn smooth_steps(h: &PHierarchy, k: usize, r: &[f64], d: &mut [f64], cfg: &BSConfig) {
    let op = &h.levels[k].op;
    for _ in 0..cfg.m {
        let ad = op.apply_block(d).expect("level vector sizes are consistent");
        let s = bs_smooth(h, k, &sub_residual(r, &ad), cfg);
        for (di, si) in d.iter_mut().zip(&s) {
            *di += cfg.damping * si;
        }
    }
}

/// p-multigrid V-cycle on level `k` with Braess–Sarazin smoothing; level 0
/// is solved exactly for the velocity.
pub fn p_vcycle(h: &PHierarchy, k: usize, r: &[f64], cfg: &BSConfig) -> Vec<f64> {
    if k == 0 {
        return h.coarse_solve(r);
    }
    let op = &h.levels[k].op;
    let mut d = vec![0.0; op.n_total()];
    smooth_steps(h, k, r, &mut d, cfg);
    let ad = op.apply_block(&d).expect("level vector sizes are consistent");
    let res = sub_residual(r, &ad);
    let t = &h.transfers[k - 1];
    let mut rc = t.restrict(&res);
    if !h.levels[k - 1].op.has_pressure() {
        rc.truncate(t.n_u_coarse);
    }
    let mut dc = p_vcycle(h, k - 1, &rc, cfg);
    dc.resize(t.n_coarse(), 0.0);
    t.prolongate_add(&dc, &mut d);
    if !cfg.half_cycle {
        smooth_steps(h, k, r, &mut d, cfg);
    }
    d
}

/// Velocity-only V-cycle with `m` damped Jacobi steps per level.
pub fn velocity_vcycle(h: &PHierarchy, k: usize, r: &[f64], m: usize, omega: f64) -> Vec<f64> {
    if k == 0 {
        return h.coarse_solve(r);
    }
    let lvl = &h.levels[k];
    let n = lvl.op.n_u();
    let mut d = vec![0.0; n];
    let mut ad = vec![0.0; n];
    let smooth = |d: &mut [f64], ad: &mut [f64]| {
        for _ in 0..m {
            lvl.op.apply_a(d, ad);
            for i in 0..n {
                d[i] += omega * (r[i] - ad[i]) / lvl.diag_a[i];
            }
        }
    };
    smooth(&mut d, &mut ad);
    lvl.op.apply_a(&d, &mut ad);
    let res = sub_residual(r, &ad);
    let t = &h.transfers[k - 1];
    let mut rc = vec![0.0; t.n_u_coarse];
    t.ru.mul_vec(&res, &mut rc);
    let dc = velocity_vcycle(h, k - 1, &rc, m, omega);
    t.pu.mul_vec_add(1.0, &dc, &mut d);
    smooth(&mut d, &mut ad);
    d
}
