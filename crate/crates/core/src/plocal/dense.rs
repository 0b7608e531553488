use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use super::hierarchy::PHierarchy;
use crate::error::{Error, Result};
use crate::fem::StokesOperator;
use crate::sparse::CsrMatrix;

/// Direct solver for a singular saddle-point system with the constant
/// pressure mode removed. The matrix is symmetrically scaled to unit
/// velocity diagonal and unit `diag(B diag(A)⁻¹ Bᵀ)` before the LU
/// factorization of `D 𝒜 D + ŵ ŵᵀ / |ŵ|²`, and each solve is followed by
/// iterative refinement against the sparse operator. Both matter for large
/// viscosity contrasts.
#[derive(Debug, Clone)]
pub struct ExactSaddle {
    lu: LU<f64, Dyn, Dyn>,
    n_u: usize,
    scale: Vec<f64>,
    weights: Vec<f64>,
    one: Vec<f64>,
    a: CsrMatrix,
    b: Option<(CsrMatrix, CsrMatrix)>,
}

const REFINEMENT_STEPS: usize = 2;

impl ExactSaddle {
    pub fn new(op: &StokesOperator) -> Result<Self> {
        let mut k = op.to_dense_block();
        let nu = op.n_u();
        let da = op.a.diagonal();
        if da.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Factorization("velocity block has a non-positive diagonal".into()));
        }
        let mut scale: Vec<f64> = da.iter().map(|d| 1.0 / d.sqrt()).collect();
        if op.has_pressure() {
            scale.extend((0..op.b.nrows()).map(|i| {
                let (cols, vals) = op.b.row(i);
                let s: f64 = cols.iter().zip(vals).map(|(&j, v)| v * v / da[j]).sum();
                if s > 0.0 {
                    1.0 / s.sqrt()
                } else {
                    1.0
                }
            }));
        }
        let n = k.nrows();
        for j in 0..n {
            for i in 0..n {
                k[(i, j)] *= scale[i] * scale[j];
            }
        }
        if op.has_pressure() {
            let w: Vec<f64> = op.mean_weights.iter().zip(&scale[nu..]).map(|(w, s)| w * s).collect();
            let norm2 = w.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
            for (i, wi) in w.iter().enumerate() {
                for (j, wj) in w.iter().enumerate() {
                    k[(nu + i, nu + j)] += wi * wj / norm2;
                }
            }
        }
        let lu = k.lu();
        if !lu.is_invertible() {
            return Err(Error::Factorization("saddle-point matrix is singular".into()));
        }
        Ok(Self {
            lu,
            n_u: nu,
            scale,
            weights: op.mean_weights.clone(),
            one: op.one_coeff.clone(),
            a: op.a.clone(),
            b: op.has_pressure().then(|| (op.b.clone(), op.bt.clone())),
        })
    }

    fn lu_solve(&self, r: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_iterator(r.len(), r.iter().zip(&self.scale).map(|(a, s)| a * s));
        let y = self.lu.solve(&rhs).expect("factorization is invertible");
        let mut x: Vec<f64> = y.iter().zip(&self.scale).map(|(a, s)| a * s).collect();
        crate::fem::project_primal(&self.weights, &self.one, &mut x[self.n_u..]);
        x
    }

    fn residual(&self, r: &[f64], x: &[f64]) -> Vec<f64> {
        let nu = self.n_u;
        let mut ax = vec![0.0; r.len()];
        self.a.mul_vec(&x[..nu], &mut ax[..nu]);
        if let Some((b, bt)) = &self.b {
            bt.mul_vec_add(1.0, &x[nu..], &mut ax[..nu]);
            b.mul_vec(&x[..nu], &mut ax[nu..]);
        }
        r.iter().zip(&ax).map(|(a, b)| a - b).collect()
    }

    /// Mean-zero solution of `𝒜 x = r` (the constant-pressure component of
    /// `r` is removed first).
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let mut rhs = r.to_vec();
        crate::fem::project_dual(&self.weights, &self.one, &mut rhs[self.n_u..]);
        let mut x = self.lu_solve(&rhs);
        for _ in 0..REFINEMENT_STEPS {
            let mut res = self.residual(&rhs, &x);
            crate::fem::project_dual(&self.weights, &self.one, &mut res[self.n_u..]);
            for (xi, d) in x.iter_mut().zip(self.lu_solve(&res)) {
                *xi += d;
            }
        }
        x
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.lu.l().nrows();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            m.set_column(j, &DVector::from_vec(self.solve(&e)));
        }
        m
    }
}

/// Dense Cholesky solver for the velocity block.
#[derive(Debug, Clone)]
pub struct ExactVelocity {
    chol: Cholesky<f64, Dyn>,
}

impl ExactVelocity {
    pub fn new(op: &StokesOperator) -> Result<Self> {
        let chol = op.a.to_dense().cholesky().ok_or_else(|| Error::Factorization("velocity block is not SPD".into()))?;
        Ok(Self { chol })
    }

    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        self.chol.solve(&DVector::from_column_slice(r)).as_slice().to_vec()
    }
}

/// Dense `𝒮⁻¹` of one Braess–Sarazin step with `Ã⁻¹ = ω_a diag(A)⁻¹` and
/// `S̃⁻¹ = ω_s diag(S)⁻¹`.
pub fn closed_form_bs_inverse(op: &StokesOperator, omega_a: f64, omega_s: f64) -> DMatrix<f64> {
    let (nu, np) = (op.n_u(), op.n_p());
    let da = op.a.diagonal();
    let ainv = DMatrix::from_diagonal(&DVector::from_iterator(nu, da.iter().map(|d| omega_a / d)));
    let b = op.b.to_dense();
    let s = &b * &ainv * b.transpose();
    // the smoother projects the Schur data onto the range of S and the result onto mean-zero pressures
    let w = DVector::from_column_slice(&op.mean_weights);
    let one = DVector::from_column_slice(&op.one_coeff);
    let proj = DMatrix::identity(np, np) - &one * w.transpose() / w.dot(&one);
    let sinv = &proj
        * DMatrix::from_diagonal(&DVector::from_iterator(np, (0..np).map(|i| omega_s / s[(i, i)])))
        * proj.transpose();
    let bai = &b * &ainv;
    let mut m = DMatrix::zeros(nu + np, nu + np);
    let top_left = &ainv - bai.transpose() * &sinv * &bai;
    let top_right = bai.transpose() * &sinv;
    m.view_mut((0, 0), (nu, nu)).copy_from(&top_left);
    m.view_mut((0, nu), (nu, np)).copy_from(&top_right);
    m.view_mut((nu, 0), (np, nu)).copy_from(&top_right.transpose());
    m.view_mut((nu, nu), (np, np)).copy_from(&(-&sinv));
    m
}

fn dense_transfer(h: &PHierarchy, k: usize) -> DMatrix<f64> {
    let t = &h.transfers[k - 1];
    let coarse_has_p = h.levels[k - 1].op.has_pressure();
    let nc = if coarse_has_p { t.n_coarse() } else { t.n_u_coarse };
    let mut p = DMatrix::zeros(t.n_fine(), nc);
    for (i, j, v) in t.pu.triplets() {
        p[(i, j)] = v;
    }
    if coarse_has_p {
        if let Some(pp) = &t.pp {
            for (i, j, v) in pp.triplets() {
                p[(t.n_u_fine + i, t.n_u_coarse + j)] = v;
            }
        }
    }
    p
}

/// Dense `ℳₖ⁻¹` of the full p-multigrid V-cycle with one smoothing step per
/// level, built from the recursion with the hierarchy's own `ω` and `ω_s`.
pub fn closed_form_vcycle(h: &PHierarchy) -> DMatrix<f64> {
    let mut m = h.coarse_inverse();
    for k in 1..h.n_levels() {
        let lvl = &h.levels[k];
        let a = lvl.op.to_dense_block();
        let s = closed_form_bs_inverse(&lvl.op, h.omega, lvl.omega_s);
        let p = dense_transfer(h, k);
        let n = a.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let sa = &s * &a;
        let as_ = &a * &s;
        m = (&id * 2.0 - &sa) * &s + (&id - &sa) * &p * &m * p.transpose() * (&id - as_);
    }
    m
}
