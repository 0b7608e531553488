use std::collections::{HashMap, HashSet};

use crate::mesh::{MeshLevel, EDGES_2D, FACES_3D};
use crate::poly::{gauss_legendre, legendre, LagrangeBasis};

/// Which velocity nodes are removed from the solve space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Every node is a degree of freedom.
    None,
    /// Homogeneous Dirichlet data on the mesh boundary.
    Boundary,
}

/// Discontinuous pressure space on each cell, built from products of
/// Legendre polynomials in reference coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureSpace {
    /// `P_{p-1}`: total degree at most `p - 1`.
    #[default]
    TotalDegree,
    /// `Q_{p-2}`: degree at most `p - 2` in each coordinate.
    TensorDegree,
}

/// Exponent tuples of the pressure basis for velocity degree `p`, ordered by
/// shell (total or max degree) and then lexicographically, so that the list
/// for a lower degree is a prefix of the list for a higher one.
pub fn pressure_exponents(space: PressureSpace, dim: usize, p: usize) -> Vec<[usize; 3]> {
    let top = match space {
        PressureSpace::TotalDegree => p as isize - 1,
        PressureSpace::TensorDegree => p as isize - 2,
    };
    let mut out = Vec::new();
    for shell in 0..=top.max(-1) {
        let shell = shell as usize;
        let n = shell + 1;
        let total = n.pow(dim as u32);
        for idx in 0..total {
            let mut e = [0usize; 3];
            let mut r = idx;
            // last coordinate slowest
            for k in 0..dim {
                e[k] = r % n;
                r /= n;
            }
            let measure = match space {
                PressureSpace::TotalDegree => e.iter().sum::<usize>(),
                PressureSpace::TensorDegree => *e.iter().max().unwrap(),
            };
            if measure == shell {
                out.push(e);
            }
        }
    }
    out
}

pub fn eval_pressure_basis(exps: &[[usize; 3]], dim: usize, xi: &[f64]) -> Vec<f64> {
    exps.iter()
        .map(|e| (0..dim).map(|k| legendre(e[k], xi[k]).0).product())
        .collect()
}

/// `∫_{[-1,1]^d} ψ_e^2`.
pub fn pressure_basis_norm2(e: &[usize; 3], dim: usize) -> f64 {
    (0..dim).map(|k| 2.0 / (2.0 * e[k] as f64 + 1.0)).product()
}

/// Tensor-product tables for degree `p` velocity and the pressure basis at a
/// Gauss grid of `n_q` points per direction.
#[derive(Debug, Clone)]
pub struct RefElement {
    pub dim: usize,
    pub degree: usize,
    pub n_q1: usize,
    /// Quadrature points, `n_q1^d` of them, x fastest.
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// `values[q * nb + i]`
    pub values: Vec<f64>,
    /// `grads[(q * nb + i) * dim + b]` (reference gradients)
    pub grads: Vec<f64>,
    pub pressure_exps: Vec<[usize; 3]>,
    /// `pressure[q * np + k]`
    pub pressure: Vec<f64>,
}

impl RefElement {
    pub fn new(dim: usize, degree: usize, n_q1: usize, space: PressureSpace) -> Self {
        let basis = LagrangeBasis::gauss_lobatto(degree);
        let (qp, qw) = gauss_legendre(n_q1);
        let v1: Vec<Vec<f64>> = qp.iter().map(|&x| basis.values(x)).collect();
        let d1: Vec<Vec<f64>> = qp.iter().map(|&x| basis.derivatives(x)).collect();
        let nb1 = degree + 1;
        let nb = nb1.pow(dim as u32);
        let nq = n_q1.pow(dim as u32);
        let pressure_exps = pressure_exponents(space, dim, degree);
        let np = pressure_exps.len();
        let mut points = Vec::with_capacity(nq);
        let mut weights = Vec::with_capacity(nq);
        let mut values = vec![0.0; nq * nb];
        let mut grads = vec![0.0; nq * nb * dim];
        let mut pressure = vec![0.0; nq * np];
        for q in 0..nq {
            let qi = split_index(q, n_q1, dim);
            let mut xi = [0.0; 3];
            let mut w = 1.0;
            for k in 0..dim {
                xi[k] = qp[qi[k]];
                w *= qw[qi[k]];
            }
            points.push(xi);
            weights.push(w);
            for i in 0..nb {
                let bi = split_index(i, nb1, dim);
                let mut val = 1.0;
                for k in 0..dim {
                    val *= v1[qi[k]][bi[k]];
                }
                values[q * nb + i] = val;
                for b in 0..dim {
                    let mut g = 1.0;
                    for k in 0..dim {
                        g *= if k == b { d1[qi[k]][bi[k]] } else { v1[qi[k]][bi[k]] };
                    }
                    grads[(q * nb + i) * dim + b] = g;
                }
            }
            let pv = eval_pressure_basis(&pressure_exps, dim, &xi);
            pressure[q * np..(q + 1) * np].copy_from_slice(&pv);
        }
        Self { dim, degree, n_q1, points, weights, values, grads, pressure_exps, pressure }
    }

    pub fn n_basis(&self) -> usize {
        (self.degree + 1).pow(self.dim as u32)
    }

    pub fn n_pressure(&self) -> usize {
        self.pressure_exps.len()
    }

    pub fn n_points(&self) -> usize {
        self.weights.len()
    }
}

/// Splits a flat index into `dim` digits of base `n`, first digit fastest.
#[inline]
pub fn split_index(mut idx: usize, n: usize, dim: usize) -> [usize; 3] {
    let mut out = [0usize; 3];
    for o in out.iter_mut().take(dim) {
        *o = idx % n;
        idx /= n;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum NodeKey {
    Vertex(usize),
    Edge(usize, usize, usize),
    Face([usize; 4], usize, usize),
    Interior(usize, usize),
}

/// Continuous `Q_p` node numbering shared across cell interfaces.
#[derive(Debug, Clone)]
pub struct VelocitySpace {
    pub dim: usize,
    pub degree: usize,
    pub n_nodes: usize,
    /// Global node of each lexicographic local node, per cell.
    pub cell_nodes: Vec<Vec<usize>>,
    pub on_boundary: Vec<bool>,
    /// Free index of each node, `None` when constrained.
    pub free_index: Vec<Option<usize>>,
    pub free_nodes: Vec<usize>,
}

impl VelocitySpace {
    pub fn new(mesh: &MeshLevel, degree: usize, constraint: Constraint) -> Self {
        let dim = mesh.dim();
        let p = degree;
        let nb1 = p + 1;
        let nb = nb1.pow(dim as u32);

        let facets = mesh.boundary_facets();
        let boundary_vertices = mesh.boundary_vertex_mask();
        let facet_set: HashSet<Vec<usize>> = facets.iter().cloned().collect();
        let mut boundary_edges: HashSet<(usize, usize)> = HashSet::new();
        if dim == 2 {
            for f in &facets {
                boundary_edges.insert((f[0], f[1]));
            }
        } else {
            // face vertex lists are sorted, recover edges from the original cells instead
            for cell in mesh.cells() {
                for face in FACES_3D {
                    let mut key: Vec<usize> = face.iter().map(|&l| cell.vertices[l]).collect();
                    key.sort_unstable();
                    if facet_set.contains(&key) {
                        for e in EDGES_2D {
                            let (a, b) = (cell.vertices[face[e[0]]], cell.vertices[face[e[1]]]);
                            boundary_edges.insert((a.min(b), a.max(b)));
                        }
                    }
                }
            }
        }

        let mut ids: HashMap<NodeKey, usize> = HashMap::new();
        let mut on_boundary = Vec::new();
        let mut cell_nodes = Vec::with_capacity(mesh.n_cells());
        for (c, cell) in mesh.cells().iter().enumerate() {
            let gv = &cell.vertices;
            let mut nodes = Vec::with_capacity(nb);
            for i in 0..nb {
                let m = split_index(i, nb1, dim);
                let free_dims: Vec<usize> = (0..dim).filter(|&k| m[k] != 0 && m[k] != p).collect();
                let fixed_bits: usize = (0..dim).filter(|&k| m[k] == p).map(|k| 1 << k).sum();
                let (key, bnd) = match free_dims.len() {
                    f if f == dim => (NodeKey::Interior(c, i), false),
                    0 => {
                        let v = gv[fixed_bits];
                        (NodeKey::Vertex(v), boundary_vertices[v])
                    }
                    1 => {
                        let k = free_dims[0];
                        let (a, b) = (gv[fixed_bits], gv[fixed_bits | (1 << k)]);
                        let s = m[k];
                        let key = if a < b { NodeKey::Edge(a, b, s) } else { NodeKey::Edge(b, a, p - s) };
                        (key, boundary_edges.contains(&(a.min(b), a.max(b))))
                    }
                    _ => {
                        let (k1, k2) = (free_dims[0], free_dims[1]);
                        let g = |e1: usize, e2: usize| gv[fixed_bits | (e1 << k1) | (e2 << k2)];
                        let corners = [[g(0, 0), g(0, 1)], [g(1, 0), g(1, 1)]];
                        let (mut c1, mut c2) = (0, 0);
                        for e1 in 0..2 {
                            for e2 in 0..2 {
                                if corners[e1][e2] < corners[c1][c2] {
                                    c1 = e1;
                                    c2 = e2;
                                }
                            }
                        }
                        let mut s1 = if c1 == 0 { m[k1] } else { p - m[k1] };
                        let mut s2 = if c2 == 0 { m[k2] } else { p - m[k2] };
                        if corners[c1][1 - c2] < corners[1 - c1][c2] {
                            std::mem::swap(&mut s1, &mut s2);
                        }
                        let mut sorted = [corners[0][0], corners[0][1], corners[1][0], corners[1][1]];
                        sorted.sort_unstable();
                        let bnd = facet_set.contains(&sorted[..]);
                        (NodeKey::Face(sorted, s1, s2), bnd)
                    }
                };
                let next = ids.len();
                let id = *ids.entry(key).or_insert_with(|| {
                    on_boundary.push(bnd);
                    next
                });
                nodes.push(id);
            }
            cell_nodes.push(nodes);
        }
        let n_nodes = ids.len();
        let mut free_index = vec![None; n_nodes];
        let mut free_nodes = Vec::new();
        for n in 0..n_nodes {
            if constraint == Constraint::None || !on_boundary[n] {
                free_index[n] = Some(free_nodes.len());
                free_nodes.push(n);
            }
        }
        Self { dim, degree, n_nodes, cell_nodes, on_boundary, free_index, free_nodes }
    }

    pub fn n_free(&self) -> usize {
        self.free_nodes.len()
    }

    /// Length of a velocity coefficient vector (all components).
    pub fn n_dofs(&self) -> usize {
        self.dim * self.free_nodes.len()
    }

    #[inline]
    pub fn dof(&self, component: usize, node: usize) -> Option<usize> {
        self.free_index[node].map(|f| component * self.free_nodes.len() + f)
    }
}
