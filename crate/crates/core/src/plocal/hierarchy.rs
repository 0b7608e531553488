use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::{assemble, dot, p_transfer, AssemblyOptions, BlockTransfer, StokesOperator};
use crate::mesh::MeshLevel;
use crate::patches::PatchSystem;

/// Degrees `1, 3, 7, …` (`p_{k+1} = 2 p_k + 1`), cut off at and ending with `target`.
pub fn degree_ladder(target: usize) -> Result<Vec<usize>> {
    if target == 0 {
        return Err(Error::InvalidArgument("target degree must be positive".into()));
    }
    let mut out = vec![1];
    while *out.last().unwrap() < target {
        let next = 2 * out.last().unwrap() + 1;
        out.push(next.min(target));
    }
    Ok(out)
}

/// Power iteration on `precond ∘ op` from a seeded random start; returns
/// the Rayleigh quotient `xᵀ(precond op x)` of the last normalized iterate.
pub fn eig_estimate<A, M>(n: usize, mut op: A, mut precond: M, steps: usize, seed: u64) -> Result<f64>
where
    A: FnMut(&[f64]) -> Vec<f64>,
    M: FnMut(&[f64]) -> Vec<f64>,
{
    if steps == 0 {
        return Err(Error::InvalidArgument("eig_estimate needs at least one step".into()));
    }
    const ATTEMPTS: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'attempt: for _ in 0..ATTEMPTS {
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut lambda = 0.0;
        for _ in 0..steps {
            let xn = dot(&x, &x).sqrt();
            if xn == 0.0 || !xn.is_finite() {
                continue 'attempt;
            }
            x.iter_mut().for_each(|v| *v /= xn);
            let y = precond(&op(&x));
            lambda = dot(&x, &y);
            x = y;
        }
        if dot(&x, &x) == 0.0 {
            continue;
        }
        return Ok(lambda);
    }
    Err(Error::EigenEstimate { attempts: ATTEMPTS })
}

/// One degree level of a patch problem.
#[derive(Debug, Clone)]
pub struct PLevel {
    pub op: Arc<StokesOperator>,
    pub diag_a: Vec<f64>,
    /// `diag(B Ã⁻¹ Bᵀ)` with `Ã⁻¹ = ω diag(A)⁻¹`; empty without pressure.
    pub diag_s: Vec<f64>,
    /// Inner Richardson relaxation `1 / λ_max(diag(S)⁻¹ S)`.
    pub omega_s: f64,
}

impl PLevel {
    /// `S x = B Ã⁻¹ Bᵀ x` without touching the counters.
    pub fn schur_apply(&self, omega: f64, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; self.op.n_u()];
        self.op.bt.mul_vec(x, &mut t);
        for (ti, d) in t.iter_mut().zip(&self.diag_a) {
            *ti *= omega / d;
        }
        let mut y = vec![0.0; self.op.n_p()];
        self.op.b.mul_vec(&t, &mut y);
        y
    }
}

/// Degree hierarchy of one patch problem, coarsest (velocity-only) first.
#[derive(Debug, Clone)]
pub struct PHierarchy {
    pub degrees: Vec<usize>,
    pub levels: Vec<PLevel>,
    /// `transfers[k - 1]` maps level `k - 1` to level `k`.
    pub transfers: Vec<BlockTransfer>,
    pub omega: f64,
    coarse: Cholesky<f64, Dyn>,
}

pub const EIG_STEPS: usize = 10;
const EIG_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

fn make_level(op: Arc<StokesOperator>, omega: f64, seed: u64) -> Result<PLevel> {
    let diag_a = op.a.diagonal();
    if diag_a.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Factorization("velocity block has a non-positive diagonal".into()));
    }
    let mut level = PLevel { op, diag_a, diag_s: Vec::new(), omega_s: 1.0 };
    if level.op.has_pressure() {
        let b = &level.op.b;
        level.diag_s = (0..b.nrows())
            .map(|i| {
                let (cols, vals) = b.row(i);
                cols.iter().zip(vals).map(|(&j, v)| v * v * omega / level.diag_a[j]).sum()
            })
            .collect();
        if level.diag_s.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Factorization("Schur diagonal is not positive".into()));
        }
        let ds = level.diag_s.clone();
        let lam = eig_estimate(
            level.op.n_p(),
            |x| level.schur_apply(omega, x),
            |y| y.iter().zip(&ds).map(|(a, d)| a / d).collect(),
            EIG_STEPS,
            seed,
        )?;
        level.omega_s = 1.0 / lam;
    }
    Ok(level)
}

impl PHierarchy {
    /// Builds the ladder below `top` on the patch mesh `mesh`.
    pub fn new(mesh: &MeshLevel, top: Arc<StokesOperator>, omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega <= 1.0) {
            return Err(Error::InvalidArgument(format!("damping must lie in (0, 1], got {omega}")));
        }
        let degrees = degree_ladder(top.degree)?;
        let base = top.options;
        let mut ops = Vec::with_capacity(degrees.len());
        for &p in &degrees[..degrees.len() - 1] {
            let opts = AssemblyOptions { with_pressure: p > 1 && base.with_pressure, ..base };
            ops.push(Arc::new(assemble(mesh, p, opts)?));
        }
        ops.push(top);
        let transfers = ops.windows(2).map(|w| p_transfer(&w[1], &w[0])).collect::<Result<Vec<_>>>()?;
        let a1 = ops[0].a.to_dense();
        let coarse = a1.cholesky().ok_or_else(|| Error::Factorization("coarse velocity block is not SPD".into()))?;
        let levels = ops
            .into_iter()
            .enumerate()
            .map(|(k, op)| make_level(op, omega, EIG_SEED ^ k as u64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { degrees, levels, transfers, omega, coarse })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest(&self) -> &PLevel {
        self.levels.last().unwrap()
    }

    /// `A₁⁻¹ r` on the coarsest level.
    pub fn coarse_solve(&self, r: &[f64]) -> Vec<f64> {
        self.coarse.solve(&DVector::from_column_slice(r)).as_slice().to_vec()
    }

    pub fn coarse_inverse(&self) -> DMatrix<f64> {
        self.coarse.inverse()
    }
}

/// Builds the hierarchy for a patch system, reassembling lower degrees on the patch mesh.
pub fn build_p_hierarchy(sys: &PatchSystem, target_p: usize, omega: f64) -> Result<PHierarchy> {
    if target_p < 2 {
        return Err(Error::InvalidArgument(format!("target degree must be at least 2, got {target_p}")));
    }
    let top = if sys.op.degree == target_p {
        Arc::clone(&sys.op)
    } else {
        Arc::new(assemble(&sys.mesh, target_p, sys.op.options)?)
    };
    PHierarchy::new(&sys.mesh, top, omega)
}
