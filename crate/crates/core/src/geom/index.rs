//! Uniform-grid spatial hashes over triangles and points.
//!
//! Both indices return supersets: a query with radius `r` yields every
//! primitive whose registered cells intersect the query ball, never fewer.
//! That superset guarantee is what lets the closest-point searches certify
//! exactness with an expanding radius.

use super::{TriMesh, Vec3};
use std::collections::HashMap;

type CellKey = (i64, i64, i64);

/// Bucket storage for a uniform grid: a dense CSR layout over the occupied
/// cell range when that range is small enough for flat arrays, otherwise a
/// hash map. Both store, per cell, the ids registered to it.
#[derive(Debug, Clone)]
enum Buckets {
    /// `offsets` has `dims[0] * dims[1] * dims[2] + 1` entries; the ids of
    /// cell `(i, j, k)` (relative to `cell_lo`) live in
    /// `items[offsets[lin]..offsets[lin + 1]]`.
    Dense {
        dims: [usize; 3],
        offsets: Vec<u32>,
        items: Vec<u32>,
    },
    Sparse(HashMap<CellKey, Vec<u32>>),
}

/// Above this many cells in the occupied range, bucket storage falls back to
/// hashing instead of dense arrays.
const DENSE_CELL_BUDGET: usize = 1 << 22;

impl Buckets {
    fn build(cell_lo: [i64; 3], cell_hi: [i64; 3], regs: &[([i64; 3], [i64; 3], u32)]) -> Self {
        let dims = [0, 1, 2].map(|a| (cell_hi[a] - cell_lo[a] + 1) as usize);
        let ncells = dims[0].saturating_mul(dims[1]).saturating_mul(dims[2]);
        if ncells <= DENSE_CELL_BUDGET {
            let lin = |c: [i64; 3]| -> usize {
                (((c[0] - cell_lo[0]) as usize * dims[1]) + (c[1] - cell_lo[1]) as usize)
                    * dims[2]
                    + (c[2] - cell_lo[2]) as usize
            };
            let mut counts = vec![0u32; ncells + 1];
            for &(tlo, thi, _) in regs {
                for i in tlo[0]..=thi[0] {
                    for j in tlo[1]..=thi[1] {
                        for k in tlo[2]..=thi[2] {
                            counts[lin([i, j, k]) + 1] += 1;
                        }
                    }
                }
            }
            for c in 1..counts.len() {
                counts[c] += counts[c - 1];
            }
            let offsets = counts;
            let mut cursor: Vec<u32> = offsets[..ncells].to_vec();
            let mut items = vec![0u32; *offsets.last().unwrap() as usize];
            for &(tlo, thi, id) in regs {
                for i in tlo[0]..=thi[0] {
                    for j in tlo[1]..=thi[1] {
                        for k in tlo[2]..=thi[2] {
                            let l = lin([i, j, k]);
                            items[cursor[l] as usize] = id;
                            cursor[l] += 1;
                        }
                    }
                }
            }
            Buckets::Dense {
                dims,
                offsets,
                items,
            }
        } else {
            let mut map: HashMap<CellKey, Vec<u32>> = HashMap::new();
            for &(tlo, thi, id) in regs {
                for i in tlo[0]..=thi[0] {
                    for j in tlo[1]..=thi[1] {
                        for k in tlo[2]..=thi[2] {
                            map.entry((i, j, k)).or_default().push(id);
                        }
                    }
                }
            }
            Buckets::Sparse(map)
        }
    }

    /// Ids in cell `c`, assuming `c` lies within `[cell_lo, cell_hi]`.
    #[inline]
    fn get(&self, cell_lo: [i64; 3], c: [i64; 3]) -> &[u32] {
        match self {
            Buckets::Dense {
                dims,
                offsets,
                items,
            } => {
                let l = (((c[0] - cell_lo[0]) as usize * dims[1]) + (c[1] - cell_lo[1]) as usize)
                    * dims[2]
                    + (c[2] - cell_lo[2]) as usize;
                &items[offsets[l] as usize..offsets[l + 1] as usize]
            }
            Buckets::Sparse(map) => map
                .get(&(c[0], c[1], c[2]))
                .map(|v| v.as_slice())
                .unwrap_or(&[]),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            Buckets::Dense { items, .. } => items.is_empty(),
            Buckets::Sparse(map) => map.is_empty(),
        }
    }
}

/// Uniform-grid hash over triangle bounding boxes.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    cell: f64,
    buckets: Buckets,
    lo: Vec3,
    hi: Vec3,
    cell_lo: [i64; 3],
    cell_hi: [i64; 3],
    /// Per-triangle bounding boxes, for cheap rejection before the exact
    /// point-triangle test.
    tri_lo: Vec<Vec3>,
    tri_hi: Vec<Vec3>,
}

impl SpatialIndex {
    /// Build with an automatic cell size: the median triangle bounding-box
    /// diagonal (a good compromise between bucket occupancy and query cost).
    pub fn build(mesh: &TriMesh) -> Self {
        let mut diags: Vec<f64> = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.triangle(t);
                (a.sup(&b).sup(&c) - a.inf(&b).inf(&c)).norm()
            })
            .collect();
        diags.sort_by(|x, y| x.total_cmp(y));
        let median = diags.get(diags.len() / 2).copied().unwrap_or(0.0);
        let cell = if median > 0.0 {
            median
        } else {
            // Degenerate or empty input: any positive size works.
            (mesh.bbox_diagonal() / 64.0).max(1.0e-6)
        };
        Self::with_cell_size(mesh, cell)
    }

    /// Build with an explicit cell size (> 0).
    pub fn with_cell_size(mesh: &TriMesh, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let (lo, hi) = mesh
            .bbox()
            .unwrap_or((Vec3::zeros(), Vec3::zeros()));
        let cell_lo = cell_of(lo, cell);
        let cell_hi = cell_of(hi, cell);
        let mut tri_lo = Vec::with_capacity(mesh.triangles.len());
        let mut tri_hi = Vec::with_capacity(mesh.triangles.len());
        let regs: Vec<([i64; 3], [i64; 3], u32)> = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.triangle(t);
                let blo = a.inf(&b).inf(&c);
                let bhi = a.sup(&b).sup(&c);
                tri_lo.push(blo);
                tri_hi.push(bhi);
                (cell_of(blo, cell), cell_of(bhi, cell), t as u32)
            })
            .collect();
        Self {
            cell,
            buckets: Buckets::build(cell_lo, cell_hi, &regs),
            lo,
            hi,
            cell_lo,
            cell_hi,
            tri_lo,
            tri_hi,
        }
    }

    /// Squared distance from `q` to triangle `t`'s bounding box (0 inside); a
    /// lower bound on the exact point-triangle distance.
    #[inline]
    pub(crate) fn tri_bbox_min_dist_sq(&self, t: u32, q: Vec3) -> f64 {
        let (blo, bhi) = (self.tri_lo[t as usize], self.tri_hi[t as usize]);
        let mut d2 = 0.0;
        for a in 0..3 {
            let gap = (blo[a] - q[a]).max(0.0).max(q[a] - bhi[a]);
            d2 += gap * gap;
        }
        d2
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn bounds_diagonal(&self) -> f64 {
        (self.hi - self.lo).norm()
    }

    /// Distance from `q` to the indexed bounding box (0 inside).
    pub fn distance_to_bounds(&self, q: Vec3) -> f64 {
        let mut d2 = 0.0;
        for a in 0..3 {
            let gap = (self.lo[a] - q[a]).max(0.0).max(q[a] - self.hi[a]);
            d2 += gap * gap;
        }
        d2.sqrt()
    }

    /// The grid cell containing `q`.
    pub(crate) fn cell_key_of(&self, q: Vec3) -> [i64; 3] {
        cell_of(q, self.cell)
    }

    /// Squared distance from `q` to the closed box of grid cell `c` (0 when
    /// `q` lies inside it).
    pub(crate) fn cell_min_dist_sq(&self, c: [i64; 3], q: Vec3) -> f64 {
        let mut d2 = 0.0;
        for a in 0..3 {
            let lo = c[a] as f64 * self.cell;
            let hi = lo + self.cell;
            let gap = (lo - q[a]).max(0.0).max(q[a] - hi);
            d2 += gap * gap;
        }
        d2
    }

    /// Visit every non-empty bucket on the Chebyshev shell of radius `rho`
    /// around `center` (clipped to the occupied cell range), passing the cell
    /// key and its triangle list. Cells are visited in an unspecified order; a
    /// triangle registered in several cells is reported once per cell.
    pub(crate) fn for_each_on_ring(
        &self,
        center: [i64; 3],
        rho: i64,
        mut visit: impl FnMut([i64; 3], &[u32]),
    ) {
        let lo = [0, 1, 2].map(|a| (center[a] - rho).max(self.cell_lo[a]));
        let hi = [0, 1, 2].map(|a| (center[a] + rho).min(self.cell_hi[a]));
        if (0..3).any(|a| lo[a] > hi[a]) {
            return;
        }
        let mut call = |c: [i64; 3]| {
            let b = self.buckets.get(self.cell_lo, c);
            if !b.is_empty() {
                visit(c, b);
            }
        };
        if rho == 0 {
            call(center);
            return;
        }
        for i in lo[0]..=hi[0] {
            let i_on = (i - center[0]).abs() == rho;
            for j in lo[1]..=hi[1] {
                let ij_on = i_on || (j - center[1]).abs() == rho;
                if ij_on {
                    for k in lo[2]..=hi[2] {
                        call([i, j, k]);
                    }
                } else {
                    for k in [center[2] - rho, center[2] + rho] {
                        if k >= lo[2] && k <= hi[2] {
                            call([i, j, k]);
                        }
                    }
                }
            }
        }
    }

    /// Largest Chebyshev ring radius around `center` that still touches the
    /// occupied cell range.
    pub(crate) fn max_ring(&self, center: [i64; 3]) -> i64 {
        (0..3)
            .map(|a| {
                (center[a] - self.cell_lo[a])
                    .abs()
                    .max((center[a] - self.cell_hi[a]).abs())
            })
            .max()
            .unwrap_or(0)
    }

    /// All triangles registered in cells intersecting the ball `(q, r)`,
    /// sorted ascending and deduplicated. A superset of the triangles actually
    /// within distance `r`.
    pub fn query_sphere(&self, q: Vec3, r: f64) -> Vec<u32> {
        let lo = cell_of(q - Vec3::repeat(r), self.cell);
        let hi = cell_of(q + Vec3::repeat(r), self.cell);
        let mut out = Vec::new();
        for i in lo[0].max(self.cell_lo[0])..=hi[0].min(self.cell_hi[0]) {
            for j in lo[1].max(self.cell_lo[1])..=hi[1].min(self.cell_hi[1]) {
                for k in lo[2].max(self.cell_lo[2])..=hi[2].min(self.cell_hi[2]) {
                    out.extend_from_slice(self.buckets.get(self.cell_lo, [i, j, k]));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Triangles in every cell the ray `(origin, dir)` passes through,
    /// sorted ascending and deduplicated. `dir` must be non-zero.
    pub fn triangles_along_ray(&self, origin: Vec3, dir: Vec3) -> Vec<u32> {
        if self.buckets.is_empty() {
            return Vec::new();
        }
        // Clip the ray to the indexed box (inflated by one cell so boundary
        // cells are never skipped to rounding).
        let pad = self.cell;
        let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
        for a in 0..3 {
            let (lo, hi) = (self.lo[a] - pad, self.hi[a] + pad);
            if dir[a].abs() < 1e-300 {
                if origin[a] < lo || origin[a] > hi {
                    return Vec::new();
                }
            } else {
                let (ta, tb) = ((lo - origin[a]) / dir[a], (hi - origin[a]) / dir[a]);
                t0 = t0.max(ta.min(tb));
                t1 = t1.min(ta.max(tb));
            }
        }
        if t1 < t0 {
            return Vec::new();
        }

        // Amanatides–Woo walk from the entry point to the exit point.
        let entry = origin + dir * t0;
        let mut cell = cell_of(entry, self.cell);
        for (c, (&lo, &hi)) in cell.iter_mut().zip(self.cell_lo.iter().zip(&self.cell_hi)) {
            *c = (*c).clamp(lo - 1, hi + 1);
        }
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            if dir[a] > 1e-300 {
                step[a] = 1;
                t_max[a] = ((cell[a] + 1) as f64 * self.cell - origin[a]) / dir[a];
                t_delta[a] = self.cell / dir[a];
            } else if dir[a] < -1e-300 {
                step[a] = -1;
                t_max[a] = (cell[a] as f64 * self.cell - origin[a]) / dir[a];
                t_delta[a] = self.cell / -dir[a];
            }
        }

        let span: i64 = (0..3)
            .map(|a| self.cell_hi[a] - self.cell_lo[a] + 3)
            .sum();
        let mut out = Vec::new();
        for _ in 0..span.max(1) as usize + 2 {
            if (0..3).all(|a| cell[a] >= self.cell_lo[a] && cell[a] <= self.cell_hi[a]) {
                out.extend_from_slice(self.buckets.get(self.cell_lo, cell));
            }
            let a = (0..3).min_by(|&x, &y| t_max[x].total_cmp(&t_max[y])).unwrap();
            if t_max[a] > t1 {
                break;
            }
            cell[a] += step[a];
            t_max[a] += t_delta[a];
            if cell[a] < self.cell_lo[a] - 1 || cell[a] > self.cell_hi[a] + 1 {
                break;
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Uniform-grid hash over a fixed point set, with exact nearest-neighbor
/// queries (certified by the same expanding-radius argument as the triangle
/// index).
#[derive(Debug, Clone)]
pub struct PointIndex {
    cell: f64,
    buckets: Buckets,
    lo: Vec3,
    hi: Vec3,
    cell_lo: [i64; 3],
    cell_hi: [i64; 3],
    n: usize,
}

impl PointIndex {
    pub fn build(points: &[Vec3]) -> Self {
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if points.is_empty() {
            lo = Vec3::zeros();
            hi = Vec3::zeros();
        }
        let diag = (hi - lo).norm();
        let cell = if diag > 0.0 {
            diag / (points.len() as f64).cbrt().max(1.0)
        } else {
            1.0
        };
        let cell_lo = cell_of(lo, cell);
        let cell_hi = cell_of(hi, cell);
        let regs: Vec<([i64; 3], [i64; 3], u32)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let key = cell_of(*p, cell);
                (key, key, i as u32)
            })
            .collect();
        Self {
            cell,
            buckets: Buckets::build(cell_lo, cell_hi, &regs),
            lo,
            hi,
            cell_lo,
            cell_hi,
            n: points.len(),
        }
    }

    /// Exact nearest neighbor of `q`: `(point index, distance)`. Ties break to
    /// the lowest point index. `points` must be the slice the index was built
    /// from. Returns `None` for an empty set.
    pub fn nearest(&self, points: &[Vec3], q: Vec3) -> Option<(u32, f64)> {
        if self.n == 0 {
            return None;
        }
        let mut radius = {
            let mut d2 = 0.0;
            for a in 0..3 {
                let gap = (self.lo[a] - q[a]).max(0.0).max(q[a] - self.hi[a]);
                d2 += gap * gap;
            }
            d2.sqrt().max(self.cell)
        };
        let far = (self.hi - self.lo).norm() + radius + self.cell;
        loop {
            if let Some((idx, d)) = self.scan_ball(points, q, radius) {
                if d <= radius {
                    return Some((idx, d));
                }
                return self.scan_ball(points, q, d);
            }
            radius *= 2.0;
            if radius > far {
                // Exhaustive fallback (cannot happen for finite inputs, kept
                // for safety with pathological coordinates).
                let mut best = (0u32, f64::INFINITY);
                for (i, p) in points.iter().enumerate() {
                    let d = (q - p).norm();
                    if d < best.1 {
                        best = (i as u32, d);
                    }
                }
                return Some(best);
            }
        }
    }

    fn scan_ball(&self, points: &[Vec3], q: Vec3, r: f64) -> Option<(u32, f64)> {
        let lo = cell_of(q - Vec3::repeat(r), self.cell);
        let hi = cell_of(q + Vec3::repeat(r), self.cell);
        let mut best: Option<(u32, f64)> = None;
        let mut best_key = (f64::INFINITY, u32::MAX);
        for i in lo[0].max(self.cell_lo[0])..=hi[0].min(self.cell_hi[0]) {
            for j in lo[1].max(self.cell_lo[1])..=hi[1].min(self.cell_hi[1]) {
                for k in lo[2].max(self.cell_lo[2])..=hi[2].min(self.cell_hi[2]) {
                    for &id in self.buckets.get(self.cell_lo, [i, j, k]) {
                        let d = (q - points[id as usize]).norm();
                        if (d, id) < best_key {
                            best_key = (d, id);
                            best = Some((id, d));
                        }
                    }
                }
            }
        }
        best
    }
}

fn cell_of(p: Vec3, cell: f64) -> [i64; 3] {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}
