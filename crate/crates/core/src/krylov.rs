//! Flexible GMRES, preconditioned CG and damped Richardson iteration.

use crate::error::{Error, Result};
use crate::fem::dot;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    /// Relative residual after each iteration, starting with `1.0`.
    pub history: Vec<f64>,
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Right-preconditioned flexible GMRES without restart.
///
/// Stops when `‖b − A x‖ / ‖b − A x0‖ ≤ tol` or after `max_it` iterations.
pub fn fgmres<A, M>(mut op: A, mut precond: M, b: &[f64], x0: &[f64], tol: f64, max_it: usize) -> Result<(Vec<f64>, SolveStats)>
where
    A: FnMut(&[f64]) -> Result<Vec<f64>>,
    M: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if max_it == 0 {
        return Err(Error::InvalidArgument("fgmres needs max_it >= 1".into()));
    }
    if b.len() != x0.len() {
        return Err(Error::DimensionMismatch { context: "fgmres initial guess", expected: b.len(), got: x0.len() });
    }
    let mut x = x0.to_vec();
    let ax = op(&x)?;
    let r0: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let beta = norm(&r0);
    let mut history = vec![1.0];
    if beta == 0.0 {
        return Ok((x, SolveStats { iterations: 0, converged: true, final_residual: 0.0, history }));
    }
    let mut v: Vec<Vec<f64>> = vec![r0.iter().map(|r| r / beta).collect()];
    let mut z: Vec<Vec<f64>> = Vec::new();
    let mut h: Vec<Vec<f64>> = Vec::new(); // column j has j + 2 entries
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut converged = false;
    let mut rel = 1.0;
    for j in 0..max_it {
        let zj = precond(&v[j])?;
        let mut w = op(&zj)?;
        z.push(zj);
        let mut hj = vec![0.0; j + 2];
        for (i, vi) in v.iter().enumerate() {
            let c = dot(vi, &w);
            hj[i] = c;
            axpy(-c, vi, &mut w);
        }
        let wn = norm(&w);
        if wn > 0.0 {
            let loss = v.iter().map(|vi| dot(vi, &w).abs()).fold(0.0, f64::max) / wn;
            if loss > 1e-8 {
                for (i, vi) in v.iter().enumerate() {
                    let c = dot(vi, &w);
                    hj[i] += c;
                    axpy(-c, vi, &mut w);
                }
            }
        }
        let hn = norm(&w);
        hj[j + 1] = hn;
        for i in 0..j {
            let t = cs[i] * hj[i] + sn[i] * hj[i + 1];
            hj[i + 1] = -sn[i] * hj[i] + cs[i] * hj[i + 1];
            hj[i] = t;
        }
        let d = hj[j].hypot(hj[j + 1]);
        let (c, s) = if d == 0.0 { (1.0, 0.0) } else { (hj[j] / d, hj[j + 1] / d) };
        hj[j] = d;
        hj[j + 1] = 0.0;
        cs.push(c);
        sn.push(s);
        g.push(-s * g[j]);
        g[j] *= c;
        h.push(hj);
        rel = g[j + 1].abs() / beta;
        history.push(rel);
        let breakdown = hn <= 1e-14 * beta;
        if rel <= tol || breakdown {
            converged = rel <= tol || breakdown;
            break;
        }
        v.push(w.iter().map(|wi| wi / hn).collect());
    }
    let k = h.len();
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for l in i + 1..k {
            s -= h[l][i] * y[l];
        }
        y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
    }
    for (yi, zi) in y.iter().zip(&z) {
        axpy(*yi, zi, &mut x);
    }
    Ok((x, SolveStats { iterations: k, converged, final_residual: rel, history }))
}

/// Preconditioned conjugate gradients from a zero initial guess. With
/// `fixed` the loop runs exactly `max_it` steps and ignores `tol`.
const ROUNDOFF: f64 = 1e-14;

pub fn cg<A, M>(mut op: A, mut precond: M, b: &[f64], tol: f64, max_it: usize, fixed: bool) -> Result<(Vec<f64>, SolveStats)>
where
    A: FnMut(&[f64]) -> Vec<f64>,
    M: FnMut(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let bn = norm(b);
    let mut history = vec![1.0];
    if bn == 0.0 {
        return Ok((x, SolveStats { iterations: 0, converged: true, final_residual: 0.0, history }));
    }
    let mut r = b.to_vec();
    let mut zv = precond(&r);
    let mut p = zv.clone();
    let mut rz = dot(&r, &zv);
    let mut it = 0;
    let mut rel = 1.0;
    while it < max_it {
        let ap = op(&p);
        let curv = dot(&p, &ap);
        if curv <= 0.0 {
            return Err(Error::NotPositiveDefinite { curvature: curv });
        }
        let alpha = rz / curv;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        it += 1;
        rel = norm(&r) / bn;
        history.push(rel);
        // fixed-step mode still stops once the residual is at roundoff level
        if (!fixed && rel <= tol) || rel <= ROUNDOFF {
            break;
        }
        zv = precond(&r);
        let rz_new = dot(&r, &zv);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&zv) {
            *pi = zi + beta * *pi;
        }
    }
    Ok((x, SolveStats { iterations: it, converged: rel <= tol, final_residual: rel, history }))
}

/// `x_{k+1} = x_k + ω M (b − A x_k)` from `x_0 = 0`; the first step skips `A`.
pub fn richardson<A, M>(mut op: A, mut precond: M, b: &[f64], n_steps: usize, omega: f64) -> Vec<f64>
where
    A: FnMut(&[f64]) -> Vec<f64>,
    M: FnMut(&[f64]) -> Vec<f64>,
{
    let mut x: Vec<f64> = precond(b).into_iter().map(|v| omega * v).collect();
    for _ in 1..n_steps {
        let ax = op(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        axpy(omega, &precond(&r), &mut x);
    }
    x
}
