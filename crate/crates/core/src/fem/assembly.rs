use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::space::{pressure_basis_norm2, Constraint, PressureSpace, RefElement, VelocitySpace};
use crate::error::{Error, Result};
use crate::mesh::{inverse_transpose, MeshLevel};
use crate::sparse::{CsrMatrix, TripletBuilder};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    /// Add `ρ ∫ u·v` to the velocity block.
    pub include_mass: bool,
    pub pressure_space: PressureSpace,
    pub constraint: Constraint,
    /// Assemble the pressure block at all (off for velocity-only coarse levels).
    pub with_pressure: bool,
    /// Quadrature points per direction beyond the default `p + 1`.
    pub extra_quadrature: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            include_mass: false,
            pressure_space: PressureSpace::TotalDegree,
            constraint: Constraint::Boundary,
            with_pressure: true,
            extra_quadrature: 0,
        }
    }
}

/// Application counts for `A`, `B` and `Bᵀ`.
#[derive(Debug, Default)]
pub struct OpCounters {
    n_a: AtomicU64,
    n_b: AtomicU64,
    n_bt: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct CounterSnapshot {
    pub n_a: u64,
    pub n_b: u64,
    pub n_bt: u64,
}

impl CounterSnapshot {
    pub fn since(&self, earlier: &CounterSnapshot) -> CounterSnapshot {
        CounterSnapshot { n_a: self.n_a - earlier.n_a, n_b: self.n_b - earlier.n_b, n_bt: self.n_bt - earlier.n_bt }
    }
}

impl std::ops::AddAssign for CounterSnapshot {
    fn add_assign(&mut self, o: CounterSnapshot) {
        self.n_a += o.n_a;
        self.n_b += o.n_b;
        self.n_bt += o.n_bt;
    }
}

impl OpCounters {
    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            n_a: self.n_a.load(Ordering::Relaxed),
            n_b: self.n_b.load(Ordering::Relaxed),
            n_bt: self.n_bt.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.n_a.store(0, Ordering::Relaxed);
        self.n_b.store(0, Ordering::Relaxed);
        self.n_bt.store(0, Ordering::Relaxed);
    }
}

impl Clone for OpCounters {
    fn clone(&self) -> Self {
        let s = self.snapshot();
        Self { n_a: AtomicU64::new(s.n_a), n_b: AtomicU64::new(s.n_b), n_bt: AtomicU64::new(s.n_bt) }
    }
}

/// Assembled saddle-point operator `[[A, Bᵀ], [B, 0]]` on one mesh.
///
/// Velocity coefficients are stored component-major over free nodes; the
/// pressure coefficient `k` of cell `c` sits at `c * n_p_cell + k`.
#[derive(Debug, Clone)]
pub struct StokesOperator {
    pub dim: usize,
    pub degree: usize,
    pub options: AssemblyOptions,
    pub velocity: VelocitySpace,
    pub n_cells: usize,
    pub n_p_cell: usize,
    pub pressure_exps: Vec<[usize; 3]>,
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub bt: CsrMatrix,
    pub pressure_mass: Vec<DMatrix<f64>>,
    pressure_mass_inv: Vec<DMatrix<f64>>,
    /// `w_k = ∫ q_k`.
    pub mean_weights: Vec<f64>,
    /// Coefficients of the pressure `≡ 1`.
    pub one_coeff: Vec<f64>,
    pub counters: OpCounters,
}

struct CellMatrices {
    a: DMatrix<f64>,
    b: Vec<DMatrix<f64>>,
    mp: DMatrix<f64>,
    w: Vec<f64>,
}

fn cell_matrices(mesh: &MeshLevel, cell: usize, re: &RefElement, opts: &AssemblyOptions) -> Result<CellMatrices> {
    let dim = re.dim;
    let nb = re.n_basis();
    let nq = re.n_points();
    let np = if opts.with_pressure { re.n_pressure() } else { 0 };
    let c = &mesh.cells()[cell];
    let mu = c.viscosity;
    let rho = if opts.include_mass { c.density } else { 0.0 };

    // physical gradients scaled by sqrt(μ w |J|), one matrix per direction
    let mut grads: Vec<DMatrix<f64>> = (0..dim).map(|_| DMatrix::zeros(nq, nb)).collect();
    let mut raw: Vec<DMatrix<f64>> = (0..dim).map(|_| DMatrix::zeros(nq, nb)).collect();
    let mut vals = DMatrix::zeros(nq, nb);
    let mut pw = DMatrix::zeros(nq, np);
    let mut pv = DMatrix::zeros(nq, np);
    let mut w = vec![0.0; np];
    for q in 0..nq {
        let xi = &re.points[q][..dim];
        let jac = mesh.jacobian(cell, xi);
        let (jit, det) = inverse_transpose(dim, &jac);
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::DegenerateCell { cell, det });
        }
        let dx = re.weights[q] * det;
        let sa = (mu * dx).sqrt();
        let sm = (rho * dx).sqrt();
        for i in 0..nb {
            let g = &re.grads[(q * nb + i) * dim..(q * nb + i + 1) * dim];
            for a in 0..dim {
                let phys: f64 = (0..dim).map(|b| jit[a][b] * g[b]).sum();
                raw[a][(q, i)] = phys;
                grads[a][(q, i)] = sa * phys;
            }
            vals[(q, i)] = sm * re.values[q * nb + i];
        }
        for k in 0..np {
            let psi = re.pressure[q * re.n_pressure() + k];
            pv[(q, k)] = psi;
            pw[(q, k)] = psi * dx;
            w[k] += psi * dx;
        }
    }
    // transposed copies so the products go through the blocked gemm path
    let mut a = DMatrix::zeros(nb, nb);
    for g in &grads {
        a.gemm(1.0, &g.transpose(), g, 1.0);
    }
    if rho > 0.0 {
        a.gemm(1.0, &vals.transpose(), &vals, 1.0);
    }
    let pwt = pw.transpose();
    let b = raw.iter().map(|r| -(&pwt * r)).collect();
    let mp = &pwt * &pv;
    Ok(CellMatrices { a, b, mp, w })
}

/// Assembles the Stokes block operator on `mesh` with velocity degree `p`.
pub fn assemble(mesh: &MeshLevel, degree: usize, opts: AssemblyOptions) -> Result<StokesOperator> {
    if degree == 0 {
        return Err(Error::InvalidArgument("velocity degree must be at least 1".into()));
    }
    if opts.with_pressure && degree < 2 {
        return Err(Error::InvalidArgument(format!("the mixed pair needs p >= 2, got {degree}")));
    }
    let dim = mesh.dim();
    let re = RefElement::new(dim, degree, degree + 1 + opts.extra_quadrature, opts.pressure_space);
    let velocity = VelocitySpace::new(mesh, degree, opts.constraint);
    let n_cells = mesh.n_cells();
    let np = if opts.with_pressure { re.n_pressure() } else { 0 };
    let nb = re.n_basis();
    let n_free = velocity.n_free();
    let n_u = dim * n_free;

    let cells: Vec<CellMatrices> =
        (0..n_cells).into_par_iter().map(|c| cell_matrices(mesh, c, &re, &opts)).collect::<Result<_>>()?;

    let mut ta = TripletBuilder::with_capacity(n_u, n_u, n_cells * nb * nb * dim);
    let mut tb = TripletBuilder::with_capacity(n_cells * np, n_u, n_cells * np * nb * dim);
    let mut pressure_mass = Vec::with_capacity(n_cells);
    let mut pressure_mass_inv = Vec::with_capacity(n_cells);
    let mut mean_weights = vec![0.0; n_cells * np];
    let mut one_coeff = vec![0.0; n_cells * np];
    for (c, cm) in cells.into_iter().enumerate() {
        let nodes = &velocity.cell_nodes[c];
        let free: Vec<Option<usize>> = nodes.iter().map(|&n| velocity.free_index[n]).collect();
        for (i, fi) in free.iter().enumerate() {
            let Some(fi) = *fi else { continue };
            for (j, fj) in free.iter().enumerate() {
                let Some(fj) = *fj else { continue };
                let v = cm.a[(i, j)];
                if v != 0.0 {
                    for comp in 0..dim {
                        ta.push(comp * n_free + fi, comp * n_free + fj, v);
                    }
                }
            }
        }
        for k in 0..np {
            let row = c * np + k;
            for (comp, bc) in cm.b.iter().enumerate() {
                for (j, fj) in free.iter().enumerate() {
                    let Some(fj) = *fj else { continue };
                    let v = bc[(k, j)];
                    if v != 0.0 {
                        tb.push(row, comp * n_free + fj, v);
                    }
                }
            }
            mean_weights[row] = cm.w[k];
        }
        if np > 0 {
            one_coeff[c * np] = 1.0;
            let mp = (&cm.mp + cm.mp.transpose()) * 0.5;
            let inv = mp.clone().cholesky().ok_or(Error::SingularBlock { cell: c })?.inverse();
            pressure_mass.push(mp);
            pressure_mass_inv.push(inv);
        }
    }
    let a = ta.build();
    let b = tb.build();
    let bt = b.transpose();
    Ok(StokesOperator {
        dim,
        degree,
        options: opts,
        velocity,
        n_cells,
        n_p_cell: np,
        pressure_exps: re.pressure_exps.clone(),
        a,
        b,
        bt,
        pressure_mass,
        pressure_mass_inv,
        mean_weights,
        one_coeff,
        counters: OpCounters::default(),
    })
}

impl StokesOperator {
    pub fn n_u(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_p(&self) -> usize {
        self.n_cells * self.n_p_cell
    }

    pub fn n_total(&self) -> usize {
        self.n_u() + self.n_p()
    }

    pub fn has_pressure(&self) -> bool {
        self.n_p_cell > 0
    }

    /// `y = A x`
    pub fn apply_a(&self, x: &[f64], y: &mut [f64]) {
        self.counters.n_a.fetch_add(1, Ordering::Relaxed);
        self.a.mul_vec(x, y);
    }

    /// `y = B x`
    pub fn apply_b(&self, x: &[f64], y: &mut [f64]) {
        self.counters.n_b.fetch_add(1, Ordering::Relaxed);
        self.b.mul_vec(x, y);
    }

    /// `y = Bᵀ x`
    pub fn apply_bt(&self, x: &[f64], y: &mut [f64]) {
        self.counters.n_bt.fetch_add(1, Ordering::Relaxed);
        self.bt.mul_vec(x, y);
    }

    /// `(A u + Bᵀ p, B u)`.
    pub fn apply_block(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n_total()];
        self.apply_block_into(x, &mut y)?;
        Ok(y)
    }

    pub fn apply_block_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let n = self.n_total();
        if x.len() != n || y.len() != n {
            return Err(Error::DimensionMismatch {
                context: "apply_block",
                expected: n,
                got: if x.len() != n { x.len() } else { y.len() },
            });
        }
        let nu = self.n_u();
        let (xu, xp) = x.split_at(nu);
        let (yu, yp) = y.split_at_mut(nu);
        self.apply_a(xu, yu);
        if self.has_pressure() {
            self.counters.n_bt.fetch_add(1, Ordering::Relaxed);
            self.bt.mul_vec_add(1.0, xp, yu);
            self.apply_b(xu, yp);
        }
        Ok(())
    }

    /// `b − 𝒜 x`.
    pub fn residual(&self, rhs: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.apply_block(x)?;
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        Ok(r)
    }

    pub fn pressure_mass_apply(&self, p: &[f64]) -> Vec<f64> {
        self.blockwise(p, &self.pressure_mass)
    }

    /// Exact solve with the cell-block-diagonal pressure mass matrix.
    pub fn pressure_mass_inverse(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.n_p() {
            return Err(Error::DimensionMismatch { context: "pressure_mass_inverse", expected: self.n_p(), got: r.len() });
        }
        Ok(self.blockwise(r, &self.pressure_mass_inv))
    }

    fn blockwise(&self, x: &[f64], blocks: &[DMatrix<f64>]) -> Vec<f64> {
        let np = self.n_p_cell;
        let mut out = vec![0.0; x.len()];
        for (c, m) in blocks.iter().enumerate() {
            let xs = &x[c * np..(c + 1) * np];
            for i in 0..np {
                out[c * np + i] = (0..np).map(|j| m[(i, j)] * xs[j]).sum();
            }
        }
        out
    }

    /// Removes the constant mode from a pressure coefficient vector so that
    /// `wᵀ p = 0`.
    pub fn project_mean_zero(&self, p: &mut [f64]) {
        project_primal(&self.mean_weights, &self.one_coeff, p);
    }

    /// Removes the component of a pressure residual that tests against the
    /// constant pressure, so that `1ᵀ r = 0`.
    pub fn project_residual(&self, r: &mut [f64]) {
        project_dual(&self.mean_weights, &self.one_coeff, r);
    }

    pub fn measure(&self) -> f64 {
        dot(&self.mean_weights, &self.one_coeff)
    }

    /// Dense block matrix, for tests and small direct solves.
    pub fn to_dense_block(&self) -> DMatrix<f64> {
        let (nu, n) = (self.n_u(), self.n_total());
        let mut m = DMatrix::zeros(n, n);
        for (i, j, v) in self.a.triplets() {
            m[(i, j)] += v;
        }
        for (i, j, v) in self.b.triplets() {
            m[(nu + i, j)] += v;
            m[(j, nu + i)] += v;
        }
        m
    }

    /// Writes `row col value` lines for the block matrix.
    pub fn dump_triplets<W: Write>(&self, mut out: W) -> Result<()> {
        let nu = self.n_u();
        writeln!(out, "% {} {} {}", self.n_total(), self.n_total(), self.a.nnz() + 2 * self.b.nnz())?;
        for (i, j, v) in self.a.triplets() {
            writeln!(out, "{i} {j} {v:.17e}")?;
        }
        for (i, j, v) in self.b.triplets() {
            writeln!(out, "{} {j} {v:.17e}", nu + i)?;
            writeln!(out, "{j} {} {v:.17e}", nu + i)?;
        }
        Ok(())
    }

    /// `∫ ψ_k²` on the reference cell for each pressure basis function.
    pub fn reference_pressure_norms(&self) -> Vec<f64> {
        self.pressure_exps.iter().map(|e| pressure_basis_norm2(e, self.dim)).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `p ← p − one (wᵀp)/(wᵀone)`
pub fn project_primal(w: &[f64], one: &[f64], p: &mut [f64]) {
    let denom = dot(w, one);
    if denom == 0.0 {
        return;
    }
    let s = dot(w, p) / denom;
    for (pi, oi) in p.iter_mut().zip(one) {
        *pi -= s * oi;
    }
}

/// `r ← r − w (oneᵀr)/(oneᵀw)`
pub fn project_dual(w: &[f64], one: &[f64], r: &mut [f64]) {
    let denom = dot(w, one);
    if denom == 0.0 {
        return;
    }
    let s = dot(one, r) / denom;
    for (ri, wi) in r.iter_mut().zip(w) {
        *ri -= s * wi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{distort, unit_cartesian_patch};

    #[test]
    fn symmetric_and_measure() {
        let m = distort(&unit_cartesian_patch(2, 0.5).unwrap(), 0.2, 3, true).unwrap();
        let op = assemble(&m, 3, AssemblyOptions::default()).unwrap();
        let d = op.a.to_dense();
        assert!((&d - d.transpose()).amax() <= 1e-12 * d.amax());
        assert!((op.measure() - 1.0).abs() < 1e-12);
        let x = vec![0.0; op.n_total()];
        assert!(op.apply_block(&x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projections() {
        let m = unit_cartesian_patch(2, 1.0).unwrap();
        let op = assemble(&m, 2, AssemblyOptions::default()).unwrap();
        let mut p = op.one_coeff.clone();
        op.project_mean_zero(&mut p);
        assert!(p.iter().all(|v| v.abs() < 1e-14));
        let mut q: Vec<f64> = (0..op.n_p()).map(|i| (i as f64).sin()).collect();
        op.project_mean_zero(&mut q);
        assert!(dot(&op.mean_weights, &q).abs() < 1e-12);
        let mut r: Vec<f64> = (0..op.n_p()).map(|i| (i as f64).cos()).collect();
        op.project_residual(&mut r);
        assert!(dot(&op.one_coeff, &r).abs() < 1e-12);
    }
}
