use std::collections::HashSet;

use super::assembly::StokesOperator;
use super::space::{eval_pressure_basis, pressure_basis_norm2, split_index};
use crate::error::{Error, Result};
use crate::kron::embedding_1d;
use crate::poly::{gauss_legendre, LagrangeBasis};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Prolongation between two discretizations, with restriction as its transpose.
#[derive(Debug, Clone)]
pub struct BlockTransfer {
    /// Fine velocity × coarse velocity.
    pub pu: CsrMatrix,
    pub ru: CsrMatrix,
    /// Fine pressure × coarse pressure, `None` when the coarse side has no pressure.
    pub pp: Option<CsrMatrix>,
    pub rp: Option<CsrMatrix>,
    pub n_u_fine: usize,
    pub n_p_fine: usize,
    pub n_u_coarse: usize,
    pub n_p_coarse: usize,
}

impl BlockTransfer {
    fn new(pu: CsrMatrix, pp: Option<CsrMatrix>, n_p_fine: usize, n_p_coarse: usize) -> Self {
        let ru = pu.transpose();
        let rp = pp.as_ref().map(CsrMatrix::transpose);
        Self { n_u_fine: pu.nrows(), n_u_coarse: pu.ncols(), n_p_fine, n_p_coarse, pu, ru, pp, rp }
    }

    pub fn n_fine(&self) -> usize {
        self.n_u_fine + self.n_p_fine
    }

    pub fn n_coarse(&self) -> usize {
        self.n_u_coarse + self.n_p_coarse
    }

    /// Coarse block vector to fine block vector.
    pub fn prolongate(&self, coarse: &[f64]) -> Vec<f64> {
        let mut fine = vec![0.0; self.n_fine()];
        self.prolongate_add(coarse, &mut fine);
        fine
    }

    /// `fine += P coarse`
    pub fn prolongate_add(&self, coarse: &[f64], fine: &mut [f64]) {
        let (cu, cp) = coarse.split_at(self.n_u_coarse);
        let (fu, fp) = fine.split_at_mut(self.n_u_fine);
        self.pu.mul_vec_add(1.0, cu, fu);
        if let Some(pp) = &self.pp {
            pp.mul_vec_add(1.0, cp, fp);
        }
    }

    /// Fine block vector to coarse block vector (`Pᵀ`).
    pub fn restrict(&self, fine: &[f64]) -> Vec<f64> {
        let mut coarse = vec![0.0; self.n_coarse()];
        let (fu, fp) = fine.split_at(self.n_u_fine);
        let (cu, cp) = coarse.split_at_mut(self.n_u_coarse);
        self.ru.mul_vec_add(1.0, fu, cu);
        if let Some(rp) = &self.rp {
            rp.mul_vec_add(1.0, fp, cp);
        }
        coarse
    }
}

fn check_velocity_match(fine: &StokesOperator, coarse: &StokesOperator) -> Result<()> {
    if fine.dim != coarse.dim {
        return Err(Error::DimensionMismatch { context: "transfer dimension", expected: fine.dim, got: coarse.dim });
    }
    if fine.options.constraint != coarse.options.constraint {
        return Err(Error::InvalidArgument("transfer between different boundary constraints".into()));
    }
    Ok(())
}

/// Velocity prolongation given, per fine cell, its coarse cell and the dense
/// local matrix `E[i_fine][j_coarse]`.
fn velocity_prolongation<'a>(
    fine: &StokesOperator,
    coarse: &StokesOperator,
    local: impl Fn(usize) -> (usize, &'a [Vec<f64>]),
) -> CsrMatrix {
    let dim = fine.dim;
    let (fs, cs) = (&fine.velocity, &coarse.velocity);
    let mut t = TripletBuilder::new(fine.n_u(), coarse.n_u());
    let mut done = HashSet::new();
    for fcell in 0..fine.n_cells {
        let (ccell, e) = local(fcell);
        for (i, &fnode) in fs.cell_nodes[fcell].iter().enumerate() {
            let Some(ff) = fs.free_index[fnode] else { continue };
            if !done.insert(fnode) {
                continue;
            }
            for (j, &cnode) in cs.cell_nodes[ccell].iter().enumerate() {
                let Some(cf) = cs.free_index[cnode] else { continue };
                let v = e[i][j];
                if v.abs() > 1e-15 {
                    for comp in 0..dim {
                        t.push(comp * fs.n_free() + ff, comp * cs.n_free() + cf, v);
                    }
                }
            }
        }
    }
    t.build()
}

fn tensor_local(dim: usize, nf1: usize, nc1: usize, f1: impl Fn(usize, usize, usize) -> f64) -> Vec<Vec<f64>> {
    let nf = nf1.pow(dim as u32);
    let nc = nc1.pow(dim as u32);
    (0..nf)
        .map(|i| {
            let mi = split_index(i, nf1, dim);
            (0..nc)
                .map(|j| {
                    let mj = split_index(j, nc1, dim);
                    (0..dim).map(|k| f1(k, mi[k], mj[k])).product()
                })
                .collect()
        })
        .collect()
}

/// Degree embedding on one mesh: `coarse` and `fine` must be assembled on
/// the same cells with degrees `p_c ≤ p_f`.
pub fn p_transfer(fine: &StokesOperator, coarse: &StokesOperator) -> Result<BlockTransfer> {
    check_velocity_match(fine, coarse)?;
    if fine.n_cells != coarse.n_cells {
        return Err(Error::DimensionMismatch { context: "p-transfer cells", expected: fine.n_cells, got: coarse.n_cells });
    }
    let e1 = embedding_1d(coarse.degree, fine.degree)?;
    let local = tensor_local(fine.dim, fine.degree + 1, coarse.degree + 1, |_, i, j| e1.get(i, j));
    let pu = velocity_prolongation(fine, coarse, |c| (c, &local[..]));
    let pp = if coarse.has_pressure() {
        if coarse.n_p_cell > fine.n_p_cell || fine.pressure_exps[..coarse.n_p_cell] != coarse.pressure_exps[..] {
            return Err(Error::InvalidArgument("pressure spaces are not nested".into()));
        }
        let mut t = TripletBuilder::new(fine.n_p(), coarse.n_p());
        for c in 0..fine.n_cells {
            for k in 0..coarse.n_p_cell {
                t.push(c * fine.n_p_cell + k, c * coarse.n_p_cell + k, 1.0);
            }
        }
        Some(t.build())
    } else {
        None
    };
    Ok(BlockTransfer::new(pu, pp, fine.n_p(), coarse.n_p()))
}

/// Embedding from a mesh level to its uniform refinement, same degree.
/// `parent[f]` is the coarse cell of fine cell `f`; the child position is
/// encoded in the low `dim` bits of `f`.
pub fn h_transfer(fine: &StokesOperator, coarse: &StokesOperator, parent: &[usize]) -> Result<BlockTransfer> {
    check_velocity_match(fine, coarse)?;
    if fine.degree != coarse.degree || parent.len() != fine.n_cells {
        return Err(Error::InvalidArgument("h-transfer needs equal degrees and a parent per fine cell".into()));
    }
    let dim = fine.dim;
    let p = fine.degree;
    let basis = LagrangeBasis::gauss_lobatto(p);
    // vals1[half][i][j]: coarse basis j at the fine node i of the given half
    let vals1: Vec<Vec<Vec<f64>>> = (0..2)
        .map(|half| basis.nodes().iter().map(|&x| basis.values((x + 2.0 * half as f64 - 1.0) / 2.0)).collect())
        .collect();
    let n_child = 1usize << dim;
    let locals: Vec<Vec<Vec<f64>>> = (0..n_child)
        .map(|bits| tensor_local(dim, p + 1, p + 1, |k, i, j| vals1[(bits >> k) & 1][i][j]))
        .collect();
    let pu = velocity_prolongation(fine, coarse, |f| (parent[f], &locals[f % n_child][..]));

    let pp = if coarse.has_pressure() {
        let np = coarse.n_p_cell;
        let exps = &coarse.pressure_exps;
        let (gp, gw) = gauss_legendre(p + 1);
        let nq = gp.len().pow(dim as u32);
        let mut tables = Vec::with_capacity(n_child);
        for bits in 0..n_child {
            let mut m = vec![vec![0.0; np]; np];
            for q in 0..nq {
                let qi = split_index(q, gp.len(), dim);
                let mut xf = [0.0; 3];
                let mut xc = [0.0; 3];
                let mut w = 1.0;
                for k in 0..dim {
                    xf[k] = gp[qi[k]];
                    xc[k] = (xf[k] + 2.0 * ((bits >> k) & 1) as f64 - 1.0) / 2.0;
                    w *= gw[qi[k]];
                }
                let vf = eval_pressure_basis(exps, dim, &xf);
                let vc = eval_pressure_basis(exps, dim, &xc);
                for l in 0..np {
                    for k in 0..np {
                        m[l][k] += w * vf[l] * vc[k];
                    }
                }
            }
            for (l, row) in m.iter_mut().enumerate() {
                let n2 = pressure_basis_norm2(&exps[l], dim);
                row.iter_mut().for_each(|v| *v /= n2);
            }
            tables.push(m);
        }
        let mut t = TripletBuilder::new(fine.n_p(), coarse.n_p());
        for (f, &c) in parent.iter().enumerate() {
            let m = &tables[f % n_child];
            for l in 0..np {
                for k in 0..np {
                    if m[l][k].abs() > 1e-15 {
                        t.push(f * np + l, c * np + k, m[l][k]);
                    }
                }
            }
        }
        Some(t.build())
    } else {
        None
    };
    Ok(BlockTransfer::new(pu, pp, fine.n_p(), coarse.n_p()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, AssemblyOptions};
    use crate::mesh::{refine, structured_grid};

    #[test]
    fn p_transfer_preserves_constants_without_constraint() {
        let m = structured_grid(2, 2, 1.0).unwrap();
        let opts = AssemblyOptions { constraint: crate::fem::Constraint::None, ..Default::default() };
        let f = assemble(&m, 7, opts).unwrap();
        let c = assemble(&m, 3, opts).unwrap();
        let t = p_transfer(&f, &c).unwrap();
        let ones = vec![1.0; c.n_total()];
        let out = t.prolongate(&ones);
        assert!(out[..f.n_u()].iter().all(|v| (v - 1.0).abs() < 1e-13));
    }

    #[test]
    fn h_transfer_reproduces_linear_field() {
        let coarse_mesh = structured_grid(2, 3, 1.0).unwrap();
        let fine_mesh = refine(&coarse_mesh).unwrap();
        let opts = AssemblyOptions { constraint: crate::fem::Constraint::None, ..Default::default() };
        let c = assemble(&coarse_mesh, 2, opts).unwrap();
        let f = assemble(&fine_mesh, 2, opts).unwrap();
        let t = h_transfer(&f, &c, fine_mesh.parent_map().unwrap()).unwrap();
        let mut x = vec![0.0; c.n_total()];
        let nodal = |op: &StokesOperator, mesh: &crate::mesh::MeshLevel| {
            let mut v = vec![0.0; op.n_u()];
            let nodes = LagrangeBasis::gauss_lobatto(2);
            for (cell, ns) in op.velocity.cell_nodes.iter().enumerate() {
                for (i, &n) in ns.iter().enumerate() {
                    let mi = split_index(i, 3, 2);
                    let xi = [nodes.nodes()[mi[0]], nodes.nodes()[mi[1]]];
                    let pt = mesh.map_point(cell, &xi);
                    v[op.velocity.free_index[n].unwrap()] = pt[0] * pt[0] + 2.0 * pt[1];
                }
            }
            v
        };
        let cu = nodal(&c, &coarse_mesh);
        x[..c.n_u()].copy_from_slice(&cu);
        let fu = nodal(&f, &fine_mesh);
        let out = t.prolongate(&x);
        for i in 0..f.velocity.n_free() {
            assert!((out[i] - fu[i]).abs() < 1e-12);
        }
        // pressure constants are preserved
        let mut y = vec![0.0; c.n_total()];
        y[c.n_u()..].copy_from_slice(&c.one_coeff);
        let out = t.prolongate(&y);
        for (a, b) in out[f.n_u()..].iter().zip(&f.one_coeff) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
