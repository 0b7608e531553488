//! Vertex patches and the multiplicative patch smoother.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{assemble, AssemblyOptions, Constraint, StokesOperator};
use crate::mesh::{Cell, MeshLevel, Point};

/// Cells surrounding one interior vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub center: usize,
    pub cells: Vec<usize>,
}

/// One patch per interior vertex, ordered lexicographically by the
/// coordinates in `order_coords` (last coordinate slowest, ties by id).
pub fn enumerate_patches_ordered(mesh: &MeshLevel, order_coords: &[Point]) -> Vec<Patch> {
    let boundary = mesh.boundary_vertex_mask();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); mesh.vertices().len()];
    for (c, cell) in mesh.cells().iter().enumerate() {
        for &v in &cell.vertices {
            incident[v].push(c);
        }
    }
    let mut centers: Vec<usize> = (0..mesh.vertices().len()).filter(|&v| !boundary[v] && !incident[v].is_empty()).collect();
    let key = |v: usize| {
        let x = order_coords[v];
        [x[2], x[1], x[0]]
    };
    centers.sort_by(|&a, &b| {
        let (ka, kb) = (key(a), key(b));
        ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    centers.into_iter().map(|v| Patch { center: v, cells: incident[v].clone() }).collect()
}

pub fn enumerate_patches(mesh: &MeshLevel) -> Vec<Patch> {
    enumerate_patches_ordered(mesh, mesh.vertices())
}

/// The patch cells as a standalone mesh with the same cell vertex order.
pub fn patch_mesh(mesh: &MeshLevel, patch: &Patch) -> Result<MeshLevel> {
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut cells = Vec::with_capacity(patch.cells.len());
    for &c in &patch.cells {
        let src = mesh.cells().get(c).ok_or(Error::InvalidCell(c))?;
        let vs = src
            .vertices
            .iter()
            .map(|&v| {
                *local.entry(v).or_insert_with(|| {
                    vertices.push(mesh.vertices()[v]);
                    vertices.len() - 1
                })
            })
            .collect();
        cells.push(Cell { vertices: vs, viscosity: src.viscosity, density: src.density });
    }
    MeshLevel::new(mesh.dim(), vertices, cells, None).map_err(|e| match e {
        Error::DegenerateCell { cell, det } => Error::DegenerateCell { cell: patch.cells[cell], det },
        other => other,
    })
}

/// Local saddle-point problem on one patch.
#[derive(Debug, Clone)]
pub struct PatchSystem {
    pub patch: Patch,
    pub mesh: MeshLevel,
    /// Interior operator `A_j`: homogeneous Dirichlet velocity, all patch pressures.
    pub op: Arc<StokesOperator>,
    /// Operator `Ā_j` on all patch DoFs, when requested.
    pub full: Option<StokesOperator>,
    /// Global block index of every interior local DoF (`Π_j`).
    pub interior_map: Vec<usize>,
    /// Global block index of every DoF of `full`, `None` where the global
    /// space constrains it (`Π̄_j`).
    pub full_map: Vec<Option<usize>>,
    /// Position of each interior local DoF in the `full` numbering.
    pub interior_in_full: Vec<usize>,
    /// `∫ q_k / μ`: the local correction's pressure is shifted to zero
    /// viscosity-weighted mean. With a viscosity jump inside the patch a
    /// plain mean would move the soft-side pressure by the jump size.
    pub gauge_weights: Vec<f64>,
}

impl PatchSystem {
    pub fn n_interior(&self) -> usize {
        self.interior_map.len()
    }
}

fn dof_map(local: &StokesOperator, global: &StokesOperator, patch: &Patch) -> Vec<Option<usize>> {
    let dim = local.dim;
    let (ls, gs) = (&local.velocity, &global.velocity);
    let nu_g = global.n_u();
    let mut map = vec![None; local.n_total()];
    for (lc, &gc) in patch.cells.iter().enumerate() {
        for (&ln, &gn) in ls.cell_nodes[lc].iter().zip(&gs.cell_nodes[gc]) {
            for comp in 0..dim {
                if let Some(l) = ls.dof(comp, ln) {
                    map[l] = gs.dof(comp, gn);
                }
            }
        }
        for k in 0..local.n_p_cell {
            map[local.n_u() + lc * local.n_p_cell + k] = Some(nu_g + gc * global.n_p_cell + k);
        }
    }
    map
}

/// Assembles the patch problem with the same degree and options as `global`.
pub fn extract_patch_system(
    mesh: &MeshLevel,
    patch: &Patch,
    global: &StokesOperator,
    with_full: bool,
) -> Result<PatchSystem> {
    let local_mesh = patch_mesh(mesh, patch)?;
    let opts = AssemblyOptions { constraint: Constraint::Boundary, ..global.options };
    let op = assemble(&local_mesh, global.degree, opts)?;
    let interior_map = dof_map(&op, global, patch)
        .into_iter()
        .map(|g| g.ok_or_else(|| Error::InvalidArgument("patch interior DoF is constrained globally".into())))
        .collect::<Result<Vec<_>>>()?;
    let (full, full_map, interior_in_full) = if with_full {
        let fo = assemble(&local_mesh, global.degree, AssemblyOptions { constraint: Constraint::None, ..opts })?;
        let fmap = dof_map(&fo, global, patch);
        let mut pos: HashMap<usize, usize> = HashMap::new();
        for (i, g) in fmap.iter().enumerate() {
            if let Some(g) = g {
                pos.insert(*g, i);
            }
        }
        let inf = interior_map.iter().map(|g| pos[g]).collect();
        (Some(fo), fmap, inf)
    } else {
        (None, Vec::new(), Vec::new())
    };
    let npc = op.n_p_cell.max(1);
    let gauge_weights =
        op.mean_weights.iter().enumerate().map(|(k, w)| w / local_mesh.cells()[k / npc].viscosity).collect();
    Ok(PatchSystem {
        patch: patch.clone(),
        mesh: local_mesh,
        op: Arc::new(op),
        full,
        interior_map,
        full_map,
        interior_in_full,
        gauge_weights,
    })
}

/// Anything that maps a patch residual to a patch correction.
pub trait LocalSolve {
    fn system(&self) -> &PatchSystem;
    fn solve(&self, r: &[f64]) -> Result<Vec<f64>>;
}

/// `Π_j (b − 𝒜 u)` from the global operator rows.
pub fn patch_residual_global(sys: &PatchSystem, global: &StokesOperator, u: &[f64], b: &[f64]) -> Vec<f64> {
    let nu = global.n_u();
    let (uu, up) = u.split_at(nu);
    sys.interior_map
        .iter()
        .map(|&g| {
            if g < nu {
                let mut s = global.a.row_dot(g, uu);
                if global.has_pressure() {
                    s += global.bt.row_dot(g, up);
                }
                b[g] - s
            } else {
                b[g] - global.b.row_dot(g - nu, uu)
            }
        })
        .collect()
}

/// `Π_j b − Π_j Ā_j Π̄_j u` with the patch-local full operator.
pub fn patch_residual_local(sys: &PatchSystem, u: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let full = sys.full.as_ref().ok_or_else(|| Error::InvalidArgument("patch system has no full operator".into()))?;
    let ubar: Vec<f64> = sys.full_map.iter().map(|g| g.map_or(0.0, |g| u[g])).collect();
    let nu = full.n_u();
    let (xu, xp) = ubar.split_at(nu);
    Ok(sys
        .interior_in_full
        .iter()
        .zip(&sys.interior_map)
        .map(|(&i, &g)| {
            let s = if i < nu {
                full.a.row_dot(i, xu) + if full.has_pressure() { full.bt.row_dot(i, xp) } else { 0.0 }
            } else {
                full.b.row_dot(i - nu, xu)
            };
            b[g] - s
        })
        .collect())
}

/// Correction of one patch, returned in local interior numbering.
pub fn local_update<S: LocalSolve + ?Sized>(
    solver: &S,
    global: &StokesOperator,
    u: &[f64],
    b: &[f64],
) -> Result<Vec<f64>> {
    let sys = solver.system();
    let mut r = if sys.full.is_some() {
        patch_residual_local(sys, u, b)?
    } else {
        patch_residual_global(sys, global, u, b)
    };
    let nu = sys.op.n_u();
    sys.op.project_residual(&mut r[nu..]);
    let mut d = solver.solve(&r).map_err(|e| Error::LocalSolve { patch: sys.patch.center, source: Box::new(e) })?;
    crate::fem::project_primal(&sys.gauge_weights, &sys.op.one_coeff, &mut d[nu..]);
    Ok(d)
}

/// `u ← u + Π_jᵀ d`
pub fn scatter_add(sys: &PatchSystem, d: &[f64], u: &mut [f64]) {
    for (&g, v) in sys.interior_map.iter().zip(d) {
        u[g] += v;
    }
}

/// One multiplicative sweep over `solvers` (reversed when `reverse`).
pub fn smoother_sweep<S: LocalSolve>(
    solvers: &[S],
    global: &StokesOperator,
    u: &mut [f64],
    b: &[f64],
    reverse: bool,
) -> Result<()> {
    let step = |s: &S, u: &mut [f64]| -> Result<()> {
        let d = local_update(s, global, u, b)?;
        scatter_add(s.system(), &d, u);
        Ok(())
    };
    if reverse {
        for s in solvers.iter().rev() {
            step(s, u)?;
        }
    } else {
        for s in solvers {
            step(s, u)?;
        }
    }
    Ok(())
}
