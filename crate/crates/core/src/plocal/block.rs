use super::dense::ExactVelocity;
use super::fdm::FdmSolver;
use super::hierarchy::PHierarchy;
use super::smoother::velocity_vcycle;
use crate::error::Result;
use crate::fem::StokesOperator;
use crate::krylov::{cg, fgmres, SolveStats};

/// Approximate or exact `A⁻¹` used inside the block preconditioner.
#[derive(Debug, Clone)]
pub enum VelocityInverse {
    /// `n_v` velocity V-cycles with `m` damped Jacobi steps per level.
    PMg { hierarchy: Box<PHierarchy>, m: usize, omega: f64, n_v: usize },
    Exact(ExactVelocity),
    Fdm(FdmSolver),
}

impl VelocityInverse {
    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        match self {
            VelocityInverse::PMg { hierarchy, m, omega, n_v } => {
                let top = hierarchy.n_levels() - 1;
                let op = &hierarchy.levels[top].op;
                let mut d = velocity_vcycle(hierarchy, top, r, *m, *omega);
                for _ in 1..*n_v {
                    let mut ad = vec![0.0; r.len()];
                    op.apply_a(&d, &mut ad);
                    let res: Vec<f64> = r.iter().zip(&ad).map(|(a, b)| a - b).collect();
                    let c = velocity_vcycle(hierarchy, top, &res, *m, *omega);
                    d.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
                }
                Ok(d)
            }
            VelocityInverse::Exact(e) => Ok(e.solve(r)),
            VelocityInverse::Fdm(f) => f.solve(r),
        }
    }
}

/// Three-stage elimination with `Ṽ` for the velocity and the pressure mass
/// matrix for the Schur complement.
pub fn block_preconditioner_apply(op: &StokesOperator, vinv: &VelocityInverse, r: &[f64]) -> Result<Vec<f64>> {
    let nu = op.n_u();
    let (ru, rp) = r.split_at(nu);
    let du1 = vinv.apply(ru)?;
    let mut rhs = vec![0.0; op.n_p()];
    op.apply_b(&du1, &mut rhs);
    rhs.iter_mut().zip(rp).for_each(|(s, p)| *s -= p);
    let dp = op.pressure_mass_inverse(&rhs)?;
    let mut t = vec![0.0; nu];
    op.apply_bt(&dp, &mut t);
    let corr = vinv.apply(&t)?;
    let mut out: Vec<f64> = du1.iter().zip(&corr).map(|(a, b)| a - b).collect();
    out.extend_from_slice(&dp);
    Ok(out)
}

/// FGMRES on the patch system preconditioned by the block preconditioner,
/// from a zero initial guess.
pub fn local_block_gmres(
    op: &StokesOperator,
    vinv: &VelocityInverse,
    r: &[f64],
    tol: f64,
    max_it: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let x0 = vec![0.0; r.len()];
    let (mut x, stats) = fgmres(
        |x| op.apply_block(x),
        |v| {
            let mut z = block_preconditioner_apply(op, vinv, v)?;
            op.project_mean_zero(&mut z[op.n_u()..]);
            Ok(z)
        },
        r,
        &x0,
        tol,
        max_it,
    )?;
    op.project_mean_zero(&mut x[op.n_u()..]);
    Ok((x, stats))
}

/// Exact velocity solves and preconditioned CG on `S = B A⁻¹ Bᵀ`.
pub fn blockwise_elimination(
    op: &StokesOperator,
    vinv: &VelocityInverse,
    r: &[f64],
    schur_tol: f64,
    schur_max_it: usize,
) -> Result<(Vec<f64>, usize)> {
    let nu = op.n_u();
    let np = op.n_p();
    let (ru, rp) = r.split_at(nu);
    let du1 = vinv.apply(ru)?;
    let mut rhs = vec![0.0; np];
    op.apply_b(&du1, &mut rhs);
    rhs.iter_mut().zip(rp).for_each(|(s, p)| *s -= p);
    op.project_residual(&mut rhs);
    let mut err = None;
    let (mut dp, stats) = cg(
        |x| {
            let mut t = vec![0.0; nu];
            op.apply_bt(x, &mut t);
            let v = match vinv.apply(&t) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    vec![0.0; nu]
                }
            };
            let mut y = vec![0.0; np];
            op.apply_b(&v, &mut y);
            y
        },
        |x| {
            let mut z = op.pressure_mass_inverse(x).expect("pressure vector length matches");
            op.project_mean_zero(&mut z);
            z
        },
        &rhs,
        schur_tol,
        schur_max_it,
        false,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    op.project_mean_zero(&mut dp);
    let mut t = vec![0.0; nu];
    op.apply_bt(&dp, &mut t);
    let corr = vinv.apply(&t)?;
    let mut out: Vec<f64> = du1.iter().zip(&corr).map(|(a, b)| a - b).collect();
    out.extend_from_slice(&dp);
    Ok((out, stats.iterations))
}
