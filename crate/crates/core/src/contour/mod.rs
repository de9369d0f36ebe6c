//! Isosurface extraction: dual-mesh topology (one vertex per active cell,
//! one quad per interior sign-change edge), midpoint and QEF vertex
//! placement, and a 256-configuration marching-cubes baseline.

pub mod tables;

use crate::error::{Error, Result};
use crate::field::{edge_crossing, interpolated_normal, GradientField, NormalMode};
use crate::geom::{TriMesh, Vec3};
use crate::grid::{is_sign_change, Axis, GridEdge, SdfGrid};
use crate::parallel;
use std::collections::HashMap;

/// A dual-mesh face: one quad per interior sign-change edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quad {
    /// Indices into `DualMesh::vertices`, wound so the face normal points
    /// from inside to outside.
    pub corners: [u32; 4],
    /// The grid edge this face is dual to.
    pub edge: GridEdge,
}

/// A mesh in dual form: one vertex per active cell, quad faces.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMesh {
    /// Cells owning a vertex, sorted by linear cell index.
    pub active_cells: Vec<[usize; 3]>,
    /// One position per active cell, in the same order.
    pub vertices: Vec<Vec3>,
    pub quads: Vec<Quad>,
}

impl DualMesh {
    /// Split each quad into two triangles `(0,1,2)` and `(0,2,3)`,
    /// preserving vertex order and count.
    pub fn triangulate(&self) -> TriMesh {
        let mut triangles = Vec::with_capacity(2 * self.quads.len());
        for q in &self.quads {
            let [a, b, c, d] = q.corners;
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
        TriMesh {
            vertices: self.vertices.clone(),
            triangles,
        }
    }
}

/// All sign-change grid edges, grouped by axis (x, then y, then z) and
/// ordered by the lower node's linear index within each axis.
pub fn active_edges(grid: &SdfGrid) -> Vec<GridEdge> {
    let dims = grid.dims();
    let mut edges = Vec::new();
    for axis in Axis::ALL {
        let a = axis.index();
        for idx in 0..grid.node_count() {
            let node = grid.node_of(idx);
            if node[a] + 1 >= dims[a] {
                continue;
            }
            let mut upper = node;
            upper[a] += 1;
            if is_sign_change(grid.value(node), grid.value(upper)) {
                edges.push(GridEdge { axis, node });
            }
        }
    }
    edges
}

/// Dual-mesh connectivity: active cells (sorted by linear cell index) and
/// quads indexing into them.
///
/// An edge contributes a quad only when all four adjacent cells exist; edges
/// on the grid boundary are skipped. Cells are active iff some quad
/// references them.
pub fn dual_topology(grid: &SdfGrid) -> (Vec<[usize; 3]>, Vec<Quad>) {
    let cdims = grid.cell_dims();
    let mut raw = Vec::new(); // quads as cell coordinates
    for edge in active_edges(grid) {
        let a = edge.axis.index();
        let (u, v) = edge.axis.others();
        let g = edge.node;
        if g[u] == 0 || g[v] == 0 || g[u] >= cdims[u] || g[v] >= cdims[v] || g[a] >= cdims[a] {
            continue;
        }
        // Four cells around the edge, counterclockwise when viewed from the
        // positive end of the axis. With the lower node inside this winding
        // makes the face normal point along +axis, i.e. outward.
        let mut cells = [[0usize; 3]; 4];
        for (slot, (du, dv)) in [(1usize, 1usize), (0, 1), (0, 0), (1, 0)].iter().enumerate() {
            let mut c = g;
            c[u] -= du;
            c[v] -= dv;
            cells[slot] = c;
        }
        if grid.value(g) >= 0.0 {
            cells.reverse();
        }
        raw.push((cells, edge));
    }

    let cell_linear =
        |c: [usize; 3]| -> usize { (c[0] * cdims[1] + c[1]) * cdims[2] + c[2] };
    let mut active: Vec<[usize; 3]> = raw.iter().flat_map(|(cells, _)| *cells).collect();
    active.sort_by_key(|&c| cell_linear(c));
    active.dedup();
    let index_of: HashMap<[usize; 3], u32> = active
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i as u32))
        .collect();
    let quads = raw
        .into_iter()
        .map(|(cells, edge)| Quad {
            corners: cells.map(|c| index_of[&c]),
            edge,
        })
        .collect();
    (active, quads)
}

/// Vertex placement at cell centers.
pub fn midpoint_vertices(grid: &SdfGrid, cells: &[[usize; 3]]) -> Vec<Vec3> {
    cells.iter().map(|&c| grid.cell_center(c)).collect()
}

/// QEF vertex placement settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QefConfig {
    /// Tikhonov weight pulling the solution toward the crossing-point mean.
    pub lambda: f64,
    /// Clamp solutions into their cell. Off by default: the unclamped
    /// solver is the classical method whose out-of-cell placements the
    /// optimization-based pipeline is measured against.
    pub clamp: bool,
    pub normal_mode: NormalMode,
}

impl Default for QefConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-2,
            clamp: false,
            normal_mode: NormalMode::OrientationConsistent,
        }
    }
}

/// Minimize `sum_e (n_e . x - n_e . p_e)^2 + lambda |x - mass_center|^2`.
pub fn solve_qef(planes: &[(Vec3, Vec3)], mass_center: Vec3, lambda: f64) -> Vec3 {
    let mut a = nalgebra::Matrix3::<f64>::zeros();
    let mut b = Vec3::zeros();
    for (point, normal) in planes {
        a += normal * normal.transpose();
        b += normal * normal.dot(point);
    }
    a += nalgebra::Matrix3::identity() * lambda;
    b += lambda * mass_center;
    // `a` is positive definite for lambda > 0, so the LU solve cannot fail.
    a.lu().solve(&b).unwrap_or(mass_center)
}

/// Per-cell QEF vertex placement from edge crossings and interpolated
/// normals. Cells whose crossings all have degenerate normals fall back to
/// the crossing mean; cells with no crossing at all (possible because quads,
/// not cells, define activity) fall back to the cell center.
pub fn qef_vertices(
    grid: &SdfGrid,
    gradients: &GradientField,
    cells: &[[usize; 3]],
    config: &QefConfig,
) -> Result<Vec<Vec3>> {
    if gradients.dims() != grid.dims() {
        return Err(Error::DimensionMismatch(format!(
            "gradient field dims {:?} do not match grid dims {:?}",
            gradients.dims(),
            grid.dims()
        )));
    }
    let h = grid.spacing();
    let positions = parallel::map_slice(cells, |&cell| {
        let mut planes = Vec::new();
        let mut crossings = Vec::new();
        for e in 0..12 {
            let (ca, cb) = tables::EDGE_CONNECTIONS[e];
            let (oa, ob) = (tables::CORNER_OFFSETS[ca], tables::CORNER_OFFSETS[cb]);
            let axis = Axis::ALL[(0..3).find(|&i| oa[i] != ob[i]).expect("cell edge spans an axis")];
            let node = [
                cell[0] + oa[0].min(ob[0]),
                cell[1] + oa[1].min(ob[1]),
                cell[2] + oa[2].min(ob[2]),
            ];
            let edge = GridEdge { axis, node };
            let (lo, hi) = edge.endpoints();
            if !is_sign_change(grid.value(lo), grid.value(hi)) {
                continue;
            }
            let crossing = edge_crossing(grid, edge).expect("sign change checked");
            crossings.push(crossing.position);
            if let Some(n) =
                interpolated_normal(grid, gradients, edge, config.normal_mode).expect("dims match")
            {
                planes.push((crossing.position, n));
            }
        }
        let mut x = if crossings.is_empty() {
            grid.cell_center(cell)
        } else {
            let mass_center =
                crossings.iter().sum::<Vec3>() / crossings.len() as f64;
            if planes.is_empty() {
                mass_center
            } else {
                solve_qef(&planes, mass_center, config.lambda)
            }
        };
        if config.clamp {
            let min = grid.cell_min(cell);
            for i in 0..3 {
                x[i] = x[i].clamp(min[i], min[i] + h);
            }
        }
        x
    });
    Ok(positions)
}

/// Dual contouring with cell-center vertices.
pub fn mesh_midpoint(grid: &SdfGrid) -> Result<DualMesh> {
    let (active_cells, quads) = dual_topology(grid);
    if quads.is_empty() {
        return Err(Error::EmptyMesh(
            "grid has no interior surface crossings".into(),
        ));
    }
    let vertices = midpoint_vertices(grid, &active_cells);
    Ok(DualMesh {
        active_cells,
        vertices,
        quads,
    })
}

/// Classical dual contouring: QEF-placed vertices.
pub fn mesh_qef(grid: &SdfGrid, gradients: &GradientField, config: &QefConfig) -> Result<DualMesh> {
    let (active_cells, quads) = dual_topology(grid);
    if quads.is_empty() {
        return Err(Error::EmptyMesh(
            "grid has no interior surface crossings".into(),
        ));
    }
    let vertices = qef_vertices(grid, gradients, &active_cells, config)?;
    Ok(DualMesh {
        active_cells,
        vertices,
        quads,
    })
}

/// Marching cubes over all cells, with vertices welded on active edges.
///
/// Vertex order equals the [`active_edges`] order; triangles are emitted in
/// linear cell order, wound so normals point from inside (negative) to
/// outside.
pub fn marching_cubes(grid: &SdfGrid) -> Result<TriMesh> {
    let edges = active_edges(grid);
    if edges.is_empty() {
        return Err(Error::EmptyMesh("grid has no surface crossings".into()));
    }
    let vertex_of: HashMap<GridEdge, u32> = edges
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, i as u32))
        .collect();
    let vertices = parallel::map_slice(&edges, |&e| {
        edge_crossing(grid, e).expect("active edge has a sign change").position
    });

    let cdims = grid.cell_dims();
    let ncells = cdims[0] * cdims[1] * cdims[2];
    let cell_of = |idx: usize| -> [usize; 3] {
        let k = idx % cdims[2];
        let rest = idx / cdims[2];
        [rest / cdims[1], rest % cdims[1], k]
    };
    let per_cell: Vec<Vec<[u32; 3]>> = parallel::map_range(ncells, |idx| {
        let cell = cell_of(idx);
        let mut config = 0usize;
        for (bit, off) in tables::CORNER_OFFSETS.iter().enumerate() {
            let node = [cell[0] + off[0], cell[1] + off[1], cell[2] + off[2]];
            if grid.value(node) < 0.0 {
                config |= 1 << bit;
            }
        }
        let row = &tables::TRI_TABLE[config];
        let mut tris = Vec::new();
        let mut i = 0;
        while i < row.len() && row[i] != 255 {
            let mut tri = [0u32; 3];
            for (slot, &local) in row[i..i + 3].iter().enumerate() {
                let (ca, cb) = tables::EDGE_CONNECTIONS[local as usize];
                let (oa, ob) = (tables::CORNER_OFFSETS[ca], tables::CORNER_OFFSETS[cb]);
                let axis =
                    Axis::ALL[(0..3).find(|&i| oa[i] != ob[i]).expect("cell edge spans an axis")];
                let node = [
                    cell[0] + oa[0].min(ob[0]),
                    cell[1] + oa[1].min(ob[1]),
                    cell[2] + oa[2].min(ob[2]),
                ];
                tri[slot] = vertex_of[&GridEdge { axis, node }];
            }
            // With the inside-bit convention the table rows are already
            // counterclockwise around the outward normal.
            tris.push(tri);
            i += 3;
        }
        tris
    });
    let triangles = per_cell.into_iter().flatten().collect();
    TriMesh::new(vertices, triangles)
}

#[cfg(test)]
mod tests;
