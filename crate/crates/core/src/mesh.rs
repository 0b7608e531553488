//! Quadrilateral / hexahedral meshes, vertex patches, distortion and uniform
//! refinement hierarchies.
//!
//! Cells are multilinear images of the reference cell `[-1, 1]^d`. Local
//! vertex `v` of a cell sits at reference corner `((v & 1), (v >> 1) & 1,
//! (v >> 2) & 1)` mapped to `{-1, 1}`, i.e. x varies fastest.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::poly::gauss_legendre;

pub type Point = [f64; 3];
pub type Jacobian = [[f64; 3]; 3];

/// Local vertex pairs forming the edges of a 2D cell.
pub const EDGES_2D: [[usize; 2]; 4] = [[0, 1], [2, 3], [0, 2], [1, 3]];
/// Local vertex pairs forming the edges of a 3D cell.
pub const EDGES_3D: [[usize; 2]; 12] = [
    [0, 1], [2, 3], [4, 5], [6, 7],
    [0, 2], [1, 3], [4, 6], [5, 7],
    [0, 4], [1, 5], [2, 6], [3, 7],
];
/// Local faces of a 3D cell, each listed in its own lexicographic order.
pub const FACES_3D: [[usize; 4]; 6] = [
    [0, 2, 4, 6], [1, 3, 5, 7],
    [0, 1, 4, 5], [2, 3, 6, 7],
    [0, 1, 2, 3], [4, 5, 6, 7],
];

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub vertices: Vec<usize>,
    pub viscosity: f64,
    pub density: f64,
}

impl Cell {
    pub fn new(vertices: Vec<usize>) -> Self {
        Self { vertices, viscosity: 1.0, density: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshLevel {
    dim: usize,
    vertices: Vec<Point>,
    cells: Vec<Cell>,
    parent: Option<Vec<usize>>,
}

impl MeshLevel {
    /// Builds a level and validates connectivity and cell orientation.
    pub fn new(dim: usize, vertices: Vec<Point>, cells: Vec<Cell>, parent: Option<Vec<usize>>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {dim}")));
        }
        for (c, cell) in cells.iter().enumerate() {
            if cell.vertices.len() != 1 << dim || cell.vertices.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidCell(c));
            }
            if !(cell.viscosity > 0.0) || !(cell.density >= 0.0) {
                return Err(Error::InvalidArgument(format!("cell {c} has invalid coefficients")));
            }
        }
        let mesh = Self { dim, vertices, cells, parent };
        mesh.check_jacobians()?;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [Cell] {
        &mut self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn parent_map(&self) -> Option<&[usize]> {
        self.parent.as_deref()
    }

    pub fn vertices_per_cell(&self) -> usize {
        1 << self.dim
    }

    /// Physical point of reference coordinate `xi` in `cell`.
    pub fn map_point(&self, cell: usize, xi: &[f64]) -> Point {
        let mut x = [0.0; 3];
        for (v, &vid) in self.cells[cell].vertices.iter().enumerate() {
            let n = vertex_shape(self.dim, v, xi);
            for a in 0..self.dim {
                x[a] += n * self.vertices[vid][a];
            }
        }
        x
    }

    /// `J[a][b] = ∂x_a / ∂ξ_b` at reference point `xi`.
    pub fn jacobian(&self, cell: usize, xi: &[f64]) -> Jacobian {
        let mut jac = [[0.0; 3]; 3];
        for (v, &vid) in self.cells[cell].vertices.iter().enumerate() {
            let g = vertex_shape_grad(self.dim, v, xi);
            for a in 0..self.dim {
                for b in 0..self.dim {
                    jac[a][b] += self.vertices[vid][a] * g[b];
                }
            }
        }
        jac
    }

    /// Smallest Jacobian determinant over the cell corners and a 4^d Gauss grid.
    pub fn min_jacobian(&self, cell: usize) -> f64 {
        let (gp, _) = gauss_legendre(4);
        let mut pts: Vec<f64> = vec![-1.0, 1.0];
        pts.extend(gp);
        let n = pts.len();
        let total = n.pow(self.dim as u32);
        let mut min = f64::INFINITY;
        let mut xi = [0.0; 3];
        for idx in 0..total {
            let mut r = idx;
            for x in xi.iter_mut().take(self.dim) {
                *x = pts[r % n];
                r /= n;
            }
            min = min.min(det(self.dim, &self.jacobian(cell, &xi)));
        }
        min
    }

    fn check_jacobians(&self) -> Result<()> {
        for c in 0..self.cells.len() {
            let det = self.min_jacobian(c);
            if !(det > 0.0) {
                return Err(Error::DegenerateCell { cell: c, det });
            }
        }
        Ok(())
    }

    /// Local vertex pairs forming the edges of a cell.
    pub fn local_edges(&self) -> &'static [[usize; 2]] {
        if self.dim == 2 { &EDGES_2D } else { &EDGES_3D }
    }

    /// Boundary facets as sorted global vertex-id lists.
    pub fn boundary_facets(&self) -> Vec<Vec<usize>> {
        let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut order = Vec::new();
        for cell in &self.cells {
            for f in facet_lists(self.dim) {
                let mut key: Vec<usize> = f.iter().map(|&l| cell.vertices[l]).collect();
                key.sort_unstable();
                let e = count.entry(key.clone()).or_insert(0);
                if *e == 0 {
                    order.push(key);
                }
                *e += 1;
            }
        }
        order.into_iter().filter(|k| count[k] == 1).collect()
    }

    pub fn boundary_vertex_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for f in self.boundary_facets() {
            for v in f {
                mask[v] = true;
            }
        }
        mask
    }

    /// Number of cells incident to each vertex.
    pub fn vertex_cell_counts(&self) -> Vec<usize> {
        let mut count = vec![0; self.vertices.len()];
        for cell in &self.cells {
            for &v in &cell.vertices {
                count[v] += 1;
            }
        }
        count
    }

    /// Shortest edge incident to each vertex.
    pub fn local_mesh_size(&self) -> Vec<f64> {
        let mut h = vec![f64::INFINITY; self.vertices.len()];
        for cell in &self.cells {
            for e in self.local_edges() {
                let (a, b) = (cell.vertices[e[0]], cell.vertices[e[1]]);
                let len = dist(&self.vertices[a], &self.vertices[b]);
                h[a] = h[a].min(len);
                h[b] = h[b].min(len);
            }
        }
        h
    }

    /// Plain-text listing: one `v x y [z]` line per vertex, then one
    /// `c v0 .. vn mu rho` line per cell.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for p in &self.vertices {
            let coords: Vec<String> = p[..self.dim].iter().map(|x| format!("{x:.17e}")).collect();
            let _ = writeln!(s, "v {}", coords.join(" "));
        }
        for c in &self.cells {
            let ids: Vec<String> = c.vertices.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "c {} {:e} {:e}", ids.join(" "), c.viscosity, c.density);
        }
        s
    }
}

fn facet_lists(dim: usize) -> Vec<Vec<usize>> {
    if dim == 2 {
        EDGES_2D.iter().map(|e| e.to_vec()).collect()
    } else {
        FACES_3D.iter().map(|f| f.to_vec()).collect()
    }
}

fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Multilinear shape function of local vertex `v` at `xi`.
#[inline]
pub fn vertex_shape(dim: usize, v: usize, xi: &[f64]) -> f64 {
    (0..dim)
        .map(|k| {
            let s = if (v >> k) & 1 == 1 { 1.0 } else { -1.0 };
            0.5 * (1.0 + s * xi[k])
        })
        .product()
}

#[inline]
pub fn vertex_shape_grad(dim: usize, v: usize, xi: &[f64]) -> [f64; 3] {
    let mut g = [0.0; 3];
    for (b, gb) in g.iter_mut().enumerate().take(dim) {
        let mut val = 1.0;
        for k in 0..dim {
            let s = if (v >> k) & 1 == 1 { 1.0 } else { -1.0 };
            val *= if k == b { 0.5 * s } else { 0.5 * (1.0 + s * xi[k]) };
        }
        *gb = val;
    }
    g
}

pub fn det(dim: usize, j: &Jacobian) -> f64 {
    if dim == 2 {
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    } else {
        j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
            + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
    }
}

/// Inverse transpose `J^{-T}` together with `det J`.
pub fn inverse_transpose(dim: usize, j: &Jacobian) -> (Jacobian, f64) {
    let d = det(dim, j);
    let mut g = [[0.0; 3]; 3];
    if dim == 2 {
        // (J^{-1})^T
        g[0][0] = j[1][1] / d;
        g[0][1] = -j[1][0] / d;
        g[1][0] = -j[0][1] / d;
        g[1][1] = j[0][0] / d;
    } else {
        // cofactor matrix / det == J^{-T}
        for a in 0..3 {
            for b in 0..3 {
                let (a1, a2) = ((a + 1) % 3, (a + 2) % 3);
                let (b1, b2) = ((b + 1) % 3, (b + 2) % 3);
                g[a][b] = (j[a1][b1] * j[a2][b2] - j[a1][b2] * j[a2][b1]) / d;
            }
        }
    }
    (g, d)
}

/// Single vertex patch of `2^d` axis-aligned cells of width `h`, tiling `[0, 2h]^d`.
pub fn unit_cartesian_patch(dim: usize, h: f64) -> Result<MeshLevel> {
    structured_grid(dim, 2, 2.0 * h)
}

/// `n^d` axis-aligned cells tiling `[0, length]^d`; cells and vertices are
/// ordered lexicographically with x fastest.
pub fn structured_grid(dim: usize, n: usize, length: f64) -> Result<MeshLevel> {
    if !(dim == 2 || dim == 3) || n == 0 || !(length > 0.0) {
        return Err(Error::InvalidArgument("structured grid needs d in {2,3}, n >= 1, length > 0".into()));
    }
    let nv = n + 1;
    let h = length / n as f64;
    let total_v = nv.pow(dim as u32);
    let mut vertices = Vec::with_capacity(total_v);
    for idx in 0..total_v {
        let mut p = [0.0; 3];
        let mut r = idx;
        for x in p.iter_mut().take(dim) {
            *x = (r % nv) as f64 * h;
            r /= nv;
        }
        vertices.push(p);
    }
    let total_c = n.pow(dim as u32);
    let mut cells = Vec::with_capacity(total_c);
    for idx in 0..total_c {
        let mut base = [0usize; 3];
        let mut r = idx;
        for b in base.iter_mut().take(dim) {
            *b = r % n;
            r /= n;
        }
        let verts = (0..1usize << dim)
            .map(|v| {
                let mut id = 0;
                let mut stride = 1;
                for k in 0..dim {
                    id += (base[k] + ((v >> k) & 1)) * stride;
                    stride *= nv;
                }
                id
            })
            .collect();
        cells.push(Cell::new(verts));
    }
    MeshLevel::new(dim, vertices, cells, None)
}

fn midpoint(points: &[Point]) -> Point {
    let mut m = [0.0; 3];
    for p in points {
        for a in 0..3 {
            m[a] += p[a];
        }
    }
    m.map(|x| x / points.len() as f64)
}

/// Reference simplex split into `d + 1` quadrilaterals / hexahedra that share
/// the simplex centroid as their single interior vertex.
pub fn simplicial_patch(dim: usize) -> Result<MeshLevel> {
    match dim {
        2 => {
            let corners: [Point; 3] = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
            let mut vertices: Vec<Point> = corners.to_vec();
            // edge midpoints 3..6: (01), (02), (12); centroid 6
            let edges = [(0, 1), (0, 2), (1, 2)];
            for &(a, b) in &edges {
                vertices.push(midpoint(&[corners[a], corners[b]]));
            }
            vertices.push(midpoint(&corners));
            let edge_id = |a: usize, b: usize| -> usize {
                3 + edges.iter().position(|&(x, y)| (x, y) == (a.min(b), a.max(b))).unwrap()
            };
            let mut cells = Vec::new();
            for a in 0..3 {
                let others: Vec<usize> = (0..3).filter(|&x| x != a).collect();
                let (mut b, mut c) = (others[0], others[1]);
                let orient = |b: usize, c: usize| {
                    let (pa, pb, pc) = (corners[a], corners[b], corners[c]);
                    (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0])
                };
                if orient(b, c) < 0.0 {
                    std::mem::swap(&mut b, &mut c);
                }
                cells.push(Cell::new(vec![a, edge_id(a, b), edge_id(a, c), 6]));
            }
            MeshLevel::new(2, vertices, cells, None)
        }
        3 => {
            let corners: [Point; 4] = [
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ];
            let mut vertices: Vec<Point> = corners.to_vec();
            let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
            let mut entity = |set: &[usize], vertices: &mut Vec<Point>| -> usize {
                let mut key = set.to_vec();
                key.sort_unstable();
                if key.len() == 1 {
                    return key[0];
                }
                *ids.entry(key.clone()).or_insert_with(|| {
                    let pts: Vec<Point> = key.iter().map(|&k| corners[k]).collect();
                    vertices.push(midpoint(&pts));
                    vertices.len() - 1
                })
            };
            let triple = |a: usize, b: usize, c: usize, d: usize| -> f64 {
                let (pa, pb, pc, pd) = (corners[a], corners[b], corners[c], corners[d]);
                let u = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
                let v = [pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2]];
                let w = [pd[0] - pa[0], pd[1] - pa[1], pd[2] - pa[2]];
                u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
                    + u[2] * (v[0] * w[1] - v[1] * w[0])
            };
            let mut cells = Vec::new();
            for a in 0..4 {
                let o: Vec<usize> = (0..4).filter(|&x| x != a).collect();
                let (b, mut c, mut d) = (o[0], o[1], o[2]);
                if triple(a, b, c, d) < 0.0 {
                    std::mem::swap(&mut c, &mut d);
                }
                // lexicographic hex vertex order: bit0 -> b, bit1 -> c, bit2 -> d
                let dirs = [b, c, d];
                let verts: Vec<usize> = (0..8)
                    .map(|v| {
                        let mut set = vec![a];
                        for (k, &dk) in dirs.iter().enumerate() {
                            if (v >> k) & 1 == 1 {
                                set.push(dk);
                            }
                        }
                        entity(&set, &mut vertices)
                    })
                    .collect();
                cells.push(Cell::new(verts));
            }
            MeshLevel::new(3, vertices, cells, None)
        }
        _ => Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {dim}"))),
    }
}

/// Displaces every movable vertex by exactly `delta * h_local` in a uniformly
/// random direction. With `freeze_boundary` only vertices off the boundary
/// move; otherwise everything except vertices owned by a single cell moves.
/// A degenerate result is reported as [`Error::DegenerateCell`].
pub fn distort(mesh: &MeshLevel, delta: f64, seed: u64, freeze_boundary: bool) -> Result<MeshLevel> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("distortion must be nonnegative, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(mesh.clone());
    }
    let movable: Vec<bool> = if freeze_boundary {
        mesh.boundary_vertex_mask().iter().map(|b| !b).collect()
    } else {
        mesh.vertex_cell_counts().iter().map(|&c| c > 1).collect()
    };
    let h = mesh.local_mesh_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertices = mesh.vertices.clone();
    for (v, p) in vertices.iter_mut().enumerate() {
        if !movable[v] {
            continue;
        }
        let dir = loop {
            let mut g = [0.0f64; 3];
            for x in g.iter_mut().take(mesh.dim) {
                *x = StandardNormal.sample(&mut rng);
            }
            let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            if n > 1e-12 {
                break g.map(|x| x / n);
            }
        };
        for a in 0..mesh.dim {
            p[a] += delta * h[v] * dir[a];
        }
    }
    MeshLevel::new(mesh.dim, vertices, mesh.cells.clone(), mesh.parent.clone())
}

/// Uniform 1:2^d refinement. Children of coarse cell `c` are fine cells
/// `c * 2^d .. (c + 1) * 2^d`, child `b` occupying the sub-box selected by the
/// bits of `b`. Coarse vertices keep their ids.
pub fn refine(mesh: &MeshLevel) -> Result<MeshLevel> {
    let dim = mesh.dim;
    let nvc = 1usize << dim;
    let mut vertices = mesh.vertices.clone();
    let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut cells = Vec::with_capacity(mesh.cells.len() * nvc);
    let mut parent = Vec::with_capacity(mesh.cells.len() * nvc);
    let lattice = 3usize.pow(dim as u32);
    for (c, cell) in mesh.cells.iter().enumerate() {
        // vertex id for each point of the 3^d lattice of the parent
        let mut lat = vec![0usize; lattice];
        for (idx, slot) in lat.iter_mut().enumerate() {
            let mut t = [0usize; 3];
            let mut r = idx;
            for x in t.iter_mut().take(dim) {
                *x = r % 3;
                r /= 3;
            }
            let mut set: Vec<usize> = vec![0];
            for k in 0..dim {
                match t[k] {
                    0 => {}
                    2 => set.iter_mut().for_each(|s| *s |= 1 << k),
                    _ => {
                        let extra: Vec<usize> = set.iter().map(|s| s | (1 << k)).collect();
                        set.extend(extra);
                    }
                }
            }
            let mut key: Vec<usize> = set.iter().map(|&l| cell.vertices[l]).collect();
            key.sort_unstable();
            *slot = if key.len() == 1 {
                key[0]
            } else {
                *ids.entry(key.clone()).or_insert_with(|| {
                    let pts: Vec<Point> = key.iter().map(|&k| mesh.vertices[k]).collect();
                    vertices.push(midpoint(&pts));
                    vertices.len() - 1
                })
            };
        }
        for b in 0..nvc {
            let verts = (0..nvc)
                .map(|e| {
                    let mut idx = 0;
                    let mut stride = 1;
                    for k in 0..dim {
                        idx += (((b >> k) & 1) + ((e >> k) & 1)) * stride;
                        stride *= 3;
                    }
                    lat[idx]
                })
                .collect();
            cells.push(Cell { vertices: verts, viscosity: cell.viscosity, density: cell.density });
            parent.push(c);
        }
    }
    MeshLevel::new(dim, vertices, cells, Some(parent))
}

/// Nested levels, coarsest first.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    levels: Vec<MeshLevel>,
}

impl MeshHierarchy {
    pub fn levels(&self) -> &[MeshLevel] {
        &self.levels
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest(&self) -> &MeshLevel {
        self.levels.last().unwrap()
    }

    /// Distorts the finest level in place, keeping its boundary fixed.
    pub fn distort_finest(&mut self, delta: f64, seed: u64) -> Result<()> {
        let fine = distort(self.finest(), delta, seed, true)?;
        *self.levels.last_mut().unwrap() = fine;
        Ok(())
    }

    /// Sets the density of every cell on every level.
    pub fn set_density(&mut self, density: f64) {
        for level in &mut self.levels {
            for c in &mut level.cells {
                c.density = density;
            }
        }
    }

    /// Cells of `level` descending from coarse cell `coarse_cell`.
    pub fn descendants(&self, coarse_cell: usize, level: usize) -> Vec<usize> {
        let per = 1usize << (self.levels[0].dim * level);
        (coarse_cell * per..(coarse_cell + 1) * per).collect()
    }
}

pub fn build_hierarchy(coarse: MeshLevel, levels: usize) -> Result<MeshHierarchy> {
    if levels == 0 {
        return Err(Error::InvalidArgument("a hierarchy needs at least one level".into()));
    }
    let mut out = vec![coarse];
    for _ in 1..levels {
        let next = refine(out.last().unwrap())?;
        out.push(next);
    }
    Ok(MeshHierarchy { levels: out })
}

/// Sets the viscosity of a coarse cell and all of its descendants.
pub fn set_viscosity_region(hier: &mut MeshHierarchy, region: usize, viscosity: f64) -> Result<()> {
    if region >= hier.levels[0].n_cells() {
        return Err(Error::InvalidCell(region));
    }
    if !(viscosity > 0.0) {
        return Err(Error::InvalidArgument(format!("viscosity must be positive, got {viscosity}")));
    }
    for l in 0..hier.levels.len() {
        for c in hier.descendants(region, l) {
            hier.levels[l].cells[c].viscosity = viscosity;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_patch_layout() {
        let m = unit_cartesian_patch(2, 1.0).unwrap();
        assert_eq!(m.n_cells(), 4);
        assert_eq!(m.vertices()[4], [1.0, 1.0, 0.0]);
        let counts = m.vertex_cell_counts();
        assert_eq!(counts[4], 4);
        let m3 = unit_cartesian_patch(3, 1.0).unwrap();
        assert_eq!(m3.n_cells(), 8);
        assert_eq!(m3.vertices()[13], [1.0, 1.0, 1.0]);
        assert_eq!(m3.vertex_cell_counts()[13], 8);
        let half = unit_cartesian_patch(2, 0.5).unwrap();
        for c in 0..4 {
            let j = half.jacobian(c, &[0.3, -0.2, 0.0]);
            assert!((det(2, &j) - 0.0625).abs() < 1e-15);
        }
    }

    #[test]
    fn simplicial_patches() {
        let m = simplicial_patch(2).unwrap();
        assert_eq!(m.n_cells(), 3);
        assert_eq!(m.vertices().len(), 7);
        let center = m.vertex_cell_counts().iter().position(|&c| c == 3).unwrap();
        let p = m.vertices()[center];
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        for cell in m.cells() {
            assert_eq!(cell.vertices.iter().filter(|&&v| v < 3).count(), 1);
        }
        let m3 = simplicial_patch(3).unwrap();
        assert_eq!(m3.n_cells(), 4);
        let center = m3.vertex_cell_counts().iter().position(|&c| c == 4).unwrap();
        for a in 0..3 {
            assert!((m3.vertices()[center][a] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn distortion_magnitude_and_determinism() {
        let m = unit_cartesian_patch(2, 1.0).unwrap();
        assert_eq!(distort(&m, 0.0, 5, false).unwrap(), m);
        let a = distort(&m, 0.1, 42, false).unwrap();
        let b = distort(&m, 0.1, 42, false).unwrap();
        assert_eq!(a, b);
        let counts = m.vertex_cell_counts();
        for v in 0..9 {
            let d = dist(&a.vertices()[v], &m.vertices()[v]);
            if counts[v] > 1 {
                assert!((d - 0.1).abs() < 1e-12);
            } else {
                assert_eq!(d, 0.0);
            }
        }
    }

    #[test]
    fn strong_distortion_sometimes_degenerates() {
        let m = unit_cartesian_patch(2, 1.0).unwrap();
        let failures = (0..400).filter(|&s| distort(&m, 0.36, s, false).is_err()).count();
        assert!(failures > 0);
        let ok = (0..200).filter(|&s| distort(&m, 0.34, s, false).is_ok()).count();
        assert_eq!(ok, 200);
    }

    #[test]
    fn hierarchy_sizes_and_parents() {
        let coarse = structured_grid(2, 3, 1.0).unwrap();
        let h = build_hierarchy(coarse.clone(), 4).unwrap();
        assert_eq!(h.finest().n_cells(), 576);
        let single = build_hierarchy(coarse, 1).unwrap();
        assert_eq!(single.n_levels(), 1);
        let fine = &h.levels()[1];
        let parents = fine.parent_map().unwrap();
        for c in 0..9 {
            let kids: Vec<usize> = (0..fine.n_cells()).filter(|&k| parents[k] == c).collect();
            assert_eq!(kids, (4 * c..4 * c + 4).collect::<Vec<_>>());
        }
        // nestedness of inherited vertices
        for (v, p) in h.levels()[0].vertices().iter().enumerate() {
            assert_eq!(&h.finest().vertices()[v], p);
        }
    }

    #[test]
    fn viscosity_region() {
        let mut h = build_hierarchy(structured_grid(2, 3, 1.0).unwrap(), 4).unwrap();
        set_viscosity_region(&mut h, 4, 1e6).unwrap();
        let n = h.finest().cells().iter().filter(|c| c.viscosity == 1e6).count();
        assert_eq!(n, 64);
        assert!(set_viscosity_region(&mut h, 9, 2.0).is_err());
    }
}
