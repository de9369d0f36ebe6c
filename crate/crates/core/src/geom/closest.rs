//! Exact point-to-triangle and point-to-mesh closest-point queries.

use super::{SpatialIndex, TriMesh, Vec3};
use crate::error::{Error, Result};

/// Which feature of the triangle carries the closest point.
///
/// `Vertex(i)` is corner `i` of the query triangle `[a, b, c]`; `Edge(i)` is
/// the open edge from corner `i` to corner `(i + 1) % 3`; `Face` is the open
/// interior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Vertex(u8),
    Edge(u8),
    Face,
}

/// Result of a point-to-mesh closest-point query.
#[derive(Debug, Clone, Copy)]
pub struct ClosestPoint {
    pub distance: f64,
    /// Index of the minimizing triangle (lowest index on exact ties).
    pub triangle: u32,
    /// The closest point itself.
    pub point: Vec3,
    /// Barycentric coordinates of `point` in the minimizing triangle.
    pub barycentric: Vec3,
    pub region: Region,
}

/// Closest point on triangle `[a, b, c]` to `q`, via Voronoi-region
/// classification. Returns the point, its barycentric coordinates, and the
/// feature region it lies on. Exact up to rounding: no iteration, no epsilon
/// in the region tests.
pub fn closest_point_on_triangle(q: Vec3, a: Vec3, b: Vec3, c: Vec3) -> (Vec3, Vec3, Region) {
    let ab = b - a;
    let ac = c - a;
    let ap = q - a;

    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, Vec3::new(1.0, 0.0, 0.0), Region::Vertex(0));
    }

    let bp = q - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, Vec3::new(0.0, 1.0, 0.0), Region::Vertex(1));
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let denom = d1 - d3;
        let v = if denom > 0.0 { d1 / denom } else { 0.0 };
        return (
            a + ab * v,
            Vec3::new(1.0 - v, v, 0.0),
            Region::Edge(0),
        );
    }

    let cp = q - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, Vec3::new(0.0, 0.0, 1.0), Region::Vertex(2));
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let denom = d2 - d6;
        let w = if denom > 0.0 { d2 / denom } else { 0.0 };
        return (
            a + ac * w,
            Vec3::new(1.0 - w, 0.0, w),
            Region::Edge(2),
        );
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let denom = (d4 - d3) + (d5 - d6);
        let w = if denom > 0.0 { (d4 - d3) / denom } else { 0.0 };
        return (
            b + (c - b) * w,
            Vec3::new(0.0, 1.0 - w, w),
            Region::Edge(1),
        );
    }

    // Interior. For degenerate (collinear) triangles every interior test above
    // already routed to a vertex/edge, so the denominator here is positive.
    let denom = va + vb + vc;
    if denom <= 0.0 || !denom.is_finite() {
        // Fully degenerate fallback: nearest of the three corners.
        let da = (q - a).norm_squared();
        let db = (q - b).norm_squared();
        let dc = (q - c).norm_squared();
        return if da <= db && da <= dc {
            (a, Vec3::new(1.0, 0.0, 0.0), Region::Vertex(0))
        } else if db <= dc {
            (b, Vec3::new(0.0, 1.0, 0.0), Region::Vertex(1))
        } else {
            (c, Vec3::new(0.0, 0.0, 1.0), Region::Vertex(2))
        };
    }
    let v = vb / denom;
    let w = vc / denom;
    (
        a + ab * v + ac * w,
        Vec3::new(1.0 - v - w, v, w),
        Region::Face,
    )
}

/// Exact closest point on `mesh` to `q`, accelerated by `index`.
///
/// Uses an expanding search radius with a certified stopping rule: a candidate
/// at distance `d` found with search radius `r >= d` is provably the global
/// minimum, because the index returns a superset of all triangles within `r`.
/// Ties are broken by the lowest triangle index.
pub fn closest_point(mesh: &TriMesh, index: &SpatialIndex, q: Vec3) -> Result<ClosestPoint> {
    if mesh.triangles.is_empty() {
        return Err(Error::EmptyMesh("closest-point query on empty mesh".into()));
    }
    // Best-first ring walk: visit cells in expanding Chebyshev shells around
    // the query, pruning cells (and whole shells) that cannot beat or tie the
    // current best. A cell on shell `rho + 1` or beyond lies at least
    // `rho * cell` away from any point of the query's own cell, so once that
    // bound exceeds the best distance the search is certified complete.
    let center = index.cell_key_of(q);
    let cell = index.cell_size();
    let mut best: Option<ClosestPoint> = None;
    let mut best_key = (f64::INFINITY, u32::MAX);
    let max_ring = index.max_ring(center);
    for rho in 0..=max_ring {
        if best.is_some() && ((rho - 1).max(0) as f64) * cell > best_key.0.sqrt() {
            break;
        }
        index.for_each_on_ring(center, rho, |c, bucket| {
            if index.cell_min_dist_sq(c, q) > best_key.0 {
                return;
            }
            for &t in bucket {
                if index.tri_bbox_min_dist_sq(t, q) > best_key.0 {
                    continue;
                }
                let [a, b, c] = mesh.triangle(t as usize);
                let (point, bary, region) = closest_point_on_triangle(q, a, b, c);
                let d2 = (q - point).norm_squared();
                if (d2, t) < best_key {
                    best_key = (d2, t);
                    best = Some(ClosestPoint {
                        distance: d2.sqrt(),
                        triangle: t,
                        point,
                        barycentric: bary,
                        region,
                    });
                }
            }
        });
    }
    match best {
        Some(b) => Ok(b),
        None => {
            // Safety net for pathological coordinates (e.g. a query so far out
            // that cell arithmetic saturates): exhaustive scan.
            let all: Vec<u32> = (0..mesh.triangles.len() as u32).collect();
            Ok(scan_candidates(mesh, q, &all).expect("mesh is non-empty"))
        }
    }
}

/// Lowest-index minimizer over a candidate list (must be sorted ascending for
/// the tie-break to mean "lowest triangle index").
fn scan_candidates(mesh: &TriMesh, q: Vec3, candidates: &[u32]) -> Option<ClosestPoint> {
    let mut best: Option<ClosestPoint> = None;
    let mut best_d2 = f64::INFINITY;
    for &t in candidates {
        let [a, b, c] = mesh.triangle(t as usize);
        let (point, bary, region) = closest_point_on_triangle(q, a, b, c);
        let d2 = (q - point).norm_squared();
        if d2 < best_d2 {
            best_d2 = d2;
            best = Some(ClosestPoint {
                distance: d2.sqrt(),
                triangle: t,
                point,
                barycentric: bary,
                region,
            });
        }
    }
    best
}
