use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fem::{split_index, StokesOperator};
use crate::kron::{kron_apply, KroneckerOp, Matrix1D};
use crate::mesh::MeshLevel;
use crate::poly::{gauss_legendre, LagrangeBasis};

/// Exact inverse of the velocity block on an axis-aligned `2^d` patch of
/// equal cells by fast diagonalization.
#[derive(Debug, Clone)]
pub struct FdmSolver {
    dim: usize,
    /// Eigenvectors per direction, outermost (slowest) direction first.
    z: Vec<Matrix1D>,
    zt: Vec<Matrix1D>,
    lambda: Vec<Vec<f64>>,
    mu: f64,
    rho: f64,
    /// Lattice position of each free node.
    lattice: Vec<usize>,
    n_free: usize,
}

/// 1D stiffness and mass on two cells of length `h` with both ends removed.
fn matrices_1d(p: usize, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let basis = LagrangeBasis::gauss_lobatto(p);
    let (qp, qw) = gauss_legendre(p + 1);
    let n = 2 * p + 1;
    let mut k = DMatrix::zeros(n, n);
    let mut m = DMatrix::zeros(n, n);
    for cell in 0..2 {
        for (x, w) in qp.iter().zip(&qw) {
            let v = basis.values(*x);
            let d = basis.derivatives(*x);
            for i in 0..=p {
                for j in 0..=p {
                    let (gi, gj) = (cell * p + i, cell * p + j);
                    k[(gi, gj)] += w * d[i] * d[j] * 2.0 / h;
                    m[(gi, gj)] += w * v[i] * v[j] * h / 2.0;
                }
            }
        }
    }
    let inner = |a: DMatrix<f64>| a.view((1, 1), (n - 2, n - 2)).into_owned();
    (inner(k), inner(m))
}

/// `Zᵀ M Z = I`, `Zᵀ K Z = Λ`.
fn generalized_eigen(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let chol = m.clone().cholesky().ok_or_else(|| Error::Factorization("1D mass matrix is not SPD".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::Factorization("singular Cholesky factor".into()))?;
    let c = &linv * k * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let z = linv.transpose() * &eig.eigenvectors;
    Ok((z, eig.eigenvalues.as_slice().to_vec()))
}

impl FdmSolver {
    pub fn new(mesh: &MeshLevel, op: &StokesOperator) -> Result<Self> {
        let dim = mesh.dim();
        let n_child = 1usize << dim;
        if mesh.n_cells() != n_child {
            return Err(Error::NonSeparable(format!("expected {n_child} cells, got {}", mesh.n_cells())));
        }
        let cell0 = &mesh.cells()[0];
        let (mu, rho) = (cell0.viscosity, if op.options.include_mass { cell0.density } else { 0.0 });
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in mesh.vertices() {
            for k in 0..dim {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let h: Vec<f64> = (0..dim).map(|k| (hi[k] - lo[k]) / 2.0).collect();
        let tol = 1e-12 * h.iter().cloned().fold(0.0, f64::max);
        let p = op.degree;
        let side = 2 * p + 1;
        let mut cell_origin = Vec::with_capacity(n_child);
        for (c, cell) in mesh.cells().iter().enumerate() {
            let rho_c = if op.options.include_mass { cell.density } else { 0.0 };
            if cell.viscosity != mu || rho_c != rho {
                return Err(Error::NonSeparable(format!("coefficients vary on cell {c}")));
            }
            let v0 = mesh.vertices()[cell.vertices[0]];
            let mut origin = [0usize; 3];
            for k in 0..dim {
                let pos = (v0[k] - lo[k]) / h[k];
                origin[k] = pos.round() as usize;
                if (pos - pos.round()).abs() * h[k] > tol || origin[k] > 1 {
                    return Err(Error::NonSeparable(format!("cell {c} is not on the 2-cell lattice")));
                }
            }
            for (b, &vid) in cell.vertices.iter().enumerate() {
                let x = mesh.vertices()[vid];
                for k in 0..dim {
                    let expect = lo[k] + h[k] * (origin[k] + ((b >> k) & 1)) as f64;
                    if (x[k] - expect).abs() > tol {
                        return Err(Error::NonSeparable(format!("cell {c} is not an axis-aligned box")));
                    }
                }
            }
            cell_origin.push(origin);
        }
        let n_free = op.velocity.n_free();
        let inner = side - 2;
        let mut lattice = vec![usize::MAX; n_free];
        for (c, nodes) in op.velocity.cell_nodes.iter().enumerate() {
            for (i, &node) in nodes.iter().enumerate() {
                let Some(f) = op.velocity.free_index[node] else { continue };
                let mi = split_index(i, p + 1, dim);
                let mut idx = 0;
                let mut stride = 1;
                for k in 0..dim {
                    idx += (cell_origin[c][k] * p + mi[k] - 1) * stride;
                    stride *= inner;
                }
                lattice[f] = idx;
            }
        }
        if lattice.contains(&usize::MAX) || n_free != inner.pow(dim as u32) {
            return Err(Error::NonSeparable("free nodes do not form a tensor lattice".into()));
        }
        let mut z = Vec::new();
        let mut zt = Vec::new();
        let mut lambda = Vec::new();
        // outermost factor is the last coordinate
        for k in (0..dim).rev() {
            let (kk, mm) = matrices_1d(p, h[k]);
            let (zk, lk) = generalized_eigen(&kk, &mm)?;
            let zm = Matrix1D::from_dmatrix(&zk);
            zt.push(zm.transpose());
            z.push(zm);
            lambda.push(lk);
        }
        Ok(Self { dim, z, zt, lambda, mu, rho, lattice, n_free })
    }

    /// `A⁻¹ r` for a velocity vector (all components).
    pub fn solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_free;
        if r.len() != self.dim * n {
            return Err(Error::DimensionMismatch { context: "fdm_solve", expected: self.dim * n, got: r.len() });
        }
        let fwd = KroneckerOp::new(self.zt.clone());
        let back = KroneckerOp::new(self.z.clone());
        let sizes: Vec<usize> = self.lambda.iter().map(Vec::len).collect();
        let mut out = vec![0.0; r.len()];
        for comp in 0..self.dim {
            let mut x = vec![0.0; n];
            for f in 0..n {
                x[self.lattice[f]] = r[comp * n + f];
            }
            let mut y = kron_apply(&fwd, &x)?;
            for (idx, yi) in y.iter_mut().enumerate() {
                // flat index: first factor slowest
                let mut rem = idx;
                let mut stiff = 0.0;
                for k in (0..self.dim).rev() {
                    let i = rem % sizes[k];
                    rem /= sizes[k];
                    stiff += self.lambda[k][i];
                }
                *yi /= self.mu * stiff + self.rho;
            }
            let x = kron_apply(&back, &y)?;
            for f in 0..n {
                out[comp * n + f] = x[self.lattice[f]];
            }
        }
        Ok(out)
    }
}

pub fn fdm_solve(mesh: &MeshLevel, op: &StokesOperator, r: &[f64]) -> Result<Vec<f64>> {
    FdmSolver::new(mesh, op)?.solve(r)
}
