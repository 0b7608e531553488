//! Tensor-product operators built from small dense 1D factors.
//!
//! Flattened indices follow one convention throughout the crate: the first
//! (outermost) factor varies slowest. For a 2D node `(ix, iy)` on a grid with
//! `n` points per direction, the flat index is `iy * n + ix`, so the operator
//! `Fy ⊗ Fx` acts with `Fx` on the fast index.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::poly::LagrangeBasis;

/// Default cap on the number of rows and columns in [`kron_materialize`].
pub const MATERIALIZE_CAP: usize = 10_000;

/// Dense row-major matrix used as a 1D factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix1D {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl Matrix1D {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "Matrix1D entries",
                expected: rows * cols,
                got: entries.len(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("Matrix1D entries must be finite".into()));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self { rows, cols, entries }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix1D) -> Result<Matrix1D> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "Matrix1D product",
                expected: self.cols,
                got: other.rows,
            });
        }
        Ok(Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self.get(i, k) * other.get(k, j)).sum()
        }))
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.entries)
    }
}

/// `F_1 ⊗ F_2 ⊗ … ⊗ F_d`, outermost factor first.
#[derive(Debug, Clone)]
pub struct KroneckerOp {
    factors: Vec<Matrix1D>,
}

impl KroneckerOp {
    pub fn new(factors: Vec<Matrix1D>) -> Self {
        assert!(!factors.is_empty(), "a Kronecker operator needs at least one factor");
        Self { factors }
    }

    pub fn factors(&self) -> &[Matrix1D] {
        &self.factors
    }

    pub fn rows(&self) -> usize {
        self.factors.iter().map(Matrix1D::rows).product()
    }

    pub fn cols(&self) -> usize {
        self.factors.iter().map(Matrix1D::cols).product()
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.factors.iter().map(Matrix1D::transpose).collect())
    }
}

/// Applies the operator one factor at a time (sum factorization).
pub fn kron_apply(op: &KroneckerOp, x: &[f64]) -> Result<Vec<f64>> {
    let factors = op.factors();
    if x.len() != op.cols() {
        // locate the first factor whose column count breaks the layout
        let mut rem = x.len();
        let mut bad = factors.len() - 1;
        for (k, f) in factors.iter().enumerate() {
            let tail: usize = factors[k + 1..].iter().map(Matrix1D::cols).product();
            if f.cols() == 0 || !rem.is_multiple_of(f.cols() * tail) || rem / tail != f.cols() {
                bad = k;
                break;
            }
            rem = tail;
        }
        return Err(Error::KronFactor { factor: bad });
    }
    let mut shape: Vec<usize> = factors.iter().map(Matrix1D::cols).collect();
    let mut cur = x.to_vec();
    for (k, f) in factors.iter().enumerate() {
        let pre: usize = shape[..k].iter().product();
        let post: usize = shape[k + 1..].iter().product();
        let (m, n) = (f.rows(), f.cols());
        let mut next = vec![0.0; pre * m * post];
        for a in 0..pre {
            let src = &cur[a * n * post..(a + 1) * n * post];
            let dst = &mut next[a * m * post..(a + 1) * m * post];
            for r in 0..m {
                let out = &mut dst[r * post..(r + 1) * post];
                for s in 0..n {
                    let coef = f.get(r, s);
                    if coef == 0.0 {
                        continue;
                    }
                    let inp = &src[s * post..(s + 1) * post];
                    for (o, v) in out.iter_mut().zip(inp) {
                        *o += coef * v;
                    }
                }
            }
        }
        shape[k] = m;
        cur = next;
    }
    Ok(cur)
}

/// Dense Kronecker product, capped at [`MATERIALIZE_CAP`] rows and columns.
pub fn kron_materialize(op: &KroneckerOp) -> Result<DMatrix<f64>> {
    kron_materialize_capped(op, MATERIALIZE_CAP)
}

pub fn kron_materialize_capped(op: &KroneckerOp, cap: usize) -> Result<DMatrix<f64>> {
    let (rows, cols) = (op.rows(), op.cols());
    if rows > cap || cols > cap {
        return Err(Error::MaterializeCap { rows, cols, cap });
    }
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for f in op.factors() {
        let fm = f.to_dmatrix();
        out = out.kronecker(&fm);
    }
    Ok(out)
}

/// Embedding of the degree-`p_coarse` Gauss–Lobatto Lagrange basis into the
/// degree-`p_fine` one: entry `(i, j)` is coarse basis `j` evaluated at fine node `i`.
pub fn embedding_1d(p_coarse: usize, p_fine: usize) -> Result<Matrix1D> {
    if p_coarse < 1 || p_coarse > p_fine {
        return Err(Error::InvalidArgument(format!(
            "embedding requires 1 <= p_coarse <= p_fine, got {p_coarse} and {p_fine}"
        )));
    }
    if p_coarse == p_fine {
        return Ok(Matrix1D::identity(p_fine + 1));
    }
    let coarse = LagrangeBasis::gauss_lobatto(p_coarse);
    let fine = LagrangeBasis::gauss_lobatto(p_fine);
    let rows: Vec<Vec<f64>> = fine.nodes().iter().map(|&x| coarse.values(x)).collect();
    Ok(Matrix1D::from_fn(p_fine + 1, p_coarse + 1, |i, j| rows[i][j]))
}
