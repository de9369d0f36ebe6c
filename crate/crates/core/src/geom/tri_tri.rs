//! Triangle-triangle interpenetration test with adjacency-aware handling.
//!
//! The test answers "do the two triangles *cross*", not "do they touch":
//! configurations whose intersection has zero area/length margin (a shared
//! vertex, a shared edge with the triangles on opposite sides, coplanar
//! contact along a boundary) report `false`. This is the semantics needed for
//! self-intersection counting, where mesh connectivity makes touching
//! ubiquitous and meaningless.
//!
//! Adjacency (number of shared vertices, computed from mesh indices by the
//! caller) selects the strategy:
//! - 0: plane-side classification plus interval overlap on the intersection
//!   line; coplanar pairs get a 2D interior-overlap test;
//! - 1: the edge connecting the two non-shared vertices of each triangle is
//!   pulled slightly toward the shared vertex and tested against the other
//!   triangle (a piercing witness that cannot be fooled by the contact point);
//! - 2: the pair interpenetrates only when coplanar with both third vertices
//!   strictly on the same side of the shared edge (a folded-flat pair).

use super::Vec3;

/// Relative offset used to pull witness segments toward the shared vertex in
/// the 1-shared-vertex case (fraction of each connecting edge's length).
const SHARED_VERTEX_OFFSET: f64 = 1e-6;

/// True when the triangle's area is vanishing relative to its longest edge
/// (cross-product norm <= 1e-12 * longest_edge^2). Degenerate triangles never
/// intersect anything; callers count them separately.
pub fn is_degenerate_triangle(t: &[Vec3; 3]) -> bool {
    let cross = (t[1] - t[0]).cross(&(t[2] - t[0])).norm();
    let edge = longest_edge(t);
    cross <= 1e-12 * edge * edge
}

fn longest_edge(t: &[Vec3; 3]) -> f64 {
    (t[1] - t[0])
        .norm()
        .max((t[2] - t[1]).norm())
        .max((t[0] - t[2]).norm())
}

/// Do two triangles interpenetrate? `shared` is the number of vertices the
/// triangles share **by index** in their parent mesh (0, 1, or 2); the shared
/// vertices themselves are located by exact coordinate equality.
pub fn tri_tri_intersect(t1: &[Vec3; 3], t2: &[Vec3; 3], shared: u8) -> bool {
    if is_degenerate_triangle(t1) || is_degenerate_triangle(t2) {
        return false;
    }
    match shared {
        1 => {
            if let Some((i1, i2)) = find_shared_vertex(t1, t2) {
                return shared_vertex_case(t1, i1, t2, i2);
            }
            general_case(t1, t2)
        }
        2 => {
            if let Some(pairs) = find_shared_edge(t1, t2) {
                return shared_edge_case(t1, t2, pairs);
            }
            general_case(t1, t2)
        }
        _ => general_case(t1, t2),
    }
}

fn find_shared_vertex(t1: &[Vec3; 3], t2: &[Vec3; 3]) -> Option<(usize, usize)> {
    for (i, a) in t1.iter().enumerate() {
        for (j, b) in t2.iter().enumerate() {
            if a == b {
                return Some((i, j));
            }
        }
    }
    None
}

fn find_shared_edge(t1: &[Vec3; 3], t2: &[Vec3; 3]) -> Option<[(usize, usize); 2]> {
    let mut pairs = Vec::new();
    for (i, a) in t1.iter().enumerate() {
        for (j, b) in t2.iter().enumerate() {
            if a == b {
                pairs.push((i, j));
            }
        }
    }
    if pairs.len() == 2 {
        Some([pairs[0], pairs[1]])
    } else {
        None
    }
}

// --- 0 shared vertices: Möller-style interval test --------------------------

fn general_case(t1: &[Vec3; 3], t2: &[Vec3; 3]) -> bool {
    let scale = longest_edge(t1).max(longest_edge(t2));
    let eps = 1e-12 * scale;

    let n1 = (t1[1] - t1[0]).cross(&(t1[2] - t1[0]));
    let n2 = (t2[1] - t2[0]).cross(&(t2[2] - t2[0]));

    // Signed distances of each triangle's vertices to the other's plane.
    let d1: Vec<f64> = t1.iter().map(|v| (v - t2[0]).dot(&n2) / n2.norm()).collect();
    let d2: Vec<f64> = t2.iter().map(|v| (v - t1[0]).dot(&n1) / n1.norm()).collect();

    let side = |d: f64| {
        if d > eps {
            1
        } else if d < -eps {
            -1
        } else {
            0
        }
    };
    let s1: Vec<i32> = d1.iter().map(|&d| side(d)).collect();
    let s2: Vec<i32> = d2.iter().map(|&d| side(d)).collect();

    if s1.iter().all(|&s| s > 0) || s1.iter().all(|&s| s < 0) {
        return false;
    }
    if s2.iter().all(|&s| s > 0) || s2.iter().all(|&s| s < 0) {
        return false;
    }
    if s1.iter().all(|&s| s == 0) {
        // Coplanar: overlap must have interior area.
        return coplanar_overlap(t1, t2, n1, eps);
    }

    // Both triangles straddle the other's plane: compare their crossing
    // intervals along the common intersection line.
    let line = n1.cross(&n2);
    let len = line.norm();
    if len <= 1e-12 * n1.norm().max(n2.norm()) {
        // Parallel but distinct planes: no crossing.
        return false;
    }
    let dir = line / len;

    let i1 = crossing_interval(t1, &d1, &s1, dir);
    let i2 = crossing_interval(t2, &d2, &s2, dir);
    match (i1, i2) {
        (Some((a0, a1)), Some((b0, b1))) => a1.min(b1) - a0.max(b0) > eps,
        _ => false,
    }
}

/// Projection interval of the triangle's plane-crossing segment onto `dir`.
fn crossing_interval(
    t: &[Vec3; 3],
    d: &[f64],
    s: &[i32],
    dir: Vec3,
) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut push = |x: f64| {
        lo = lo.min(x);
        hi = hi.max(x);
    };
    for i in 0..3 {
        if s[i] == 0 {
            push(dir.dot(&t[i]));
        }
        let j = (i + 1) % 3;
        if s[i] * s[j] < 0 {
            let f = d[i] / (d[i] - d[j]);
            push(dir.dot(&(t[i] + (t[j] - t[i]) * f)));
        }
    }
    if lo.is_finite() {
        Some((lo, hi))
    } else {
        None
    }
}

/// 2D interior-overlap test for coplanar triangles. Touching (shared boundary
/// contact without interior overlap) reports `false`.
fn coplanar_overlap(t1: &[Vec3; 3], t2: &[Vec3; 3], normal: Vec3, eps: f64) -> bool {
    // Project out the dominant normal axis.
    let axis = normal.iamax();
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let p1: Vec<[f64; 2]> = t1.iter().map(|p| [p[u], p[v]]).collect();
    let p2: Vec<[f64; 2]> = t2.iter().map(|p| [p[u], p[v]]).collect();
    let area_eps = eps.max(1e-12 * longest_edge(t1).max(longest_edge(t2)));
    let area_eps = area_eps * area_eps;

    // Proper edge-edge crossings.
    for i in 0..3 {
        for j in 0..3 {
            if segments_cross_properly(
                p1[i],
                p1[(i + 1) % 3],
                p2[j],
                p2[(j + 1) % 3],
                area_eps,
            ) {
                return true;
            }
        }
    }
    // One triangle strictly inside the other (vertices or, for identical
    // boundary configurations, the centroid).
    let centroid = |p: &[[f64; 2]]| {
        [
            (p[0][0] + p[1][0] + p[2][0]) / 3.0,
            (p[0][1] + p[1][1] + p[2][1]) / 3.0,
        ]
    };
    p1.iter().any(|&q| strictly_inside_2d(q, &p2, area_eps))
        || p2.iter().any(|&q| strictly_inside_2d(q, &p1, area_eps))
        || strictly_inside_2d(centroid(&p1), &p2, area_eps)
        || strictly_inside_2d(centroid(&p2), &p1, area_eps)
}

fn orient2d(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_cross_properly(
    a: [f64; 2],
    b: [f64; 2],
    c: [f64; 2],
    d: [f64; 2],
    area_eps: f64,
) -> bool {
    let o1 = orient2d(a, b, c);
    let o2 = orient2d(a, b, d);
    let o3 = orient2d(c, d, a);
    let o4 = orient2d(c, d, b);
    let strict = |x: f64, y: f64| (x > area_eps && y < -area_eps) || (x < -area_eps && y > area_eps);
    strict(o1, o2) && strict(o3, o4)
}

fn strictly_inside_2d(q: [f64; 2], t: &[[f64; 2]], area_eps: f64) -> bool {
    let o0 = orient2d(t[0], t[1], q);
    let o1 = orient2d(t[1], t[2], q);
    let o2 = orient2d(t[2], t[0], q);
    (o0 > area_eps && o1 > area_eps && o2 > area_eps)
        || (o0 < -area_eps && o1 < -area_eps && o2 < -area_eps)
}

// --- 1 shared vertex ---------------------------------------------------------

fn shared_vertex_case(t1: &[Vec3; 3], i1: usize, t2: &[Vec3; 3], i2: usize) -> bool {
    let witness = |t: &[Vec3; 3], shared_idx: usize| -> [Vec3; 2] {
        let s = t[shared_idx];
        let a = t[(shared_idx + 1) % 3];
        let b = t[(shared_idx + 2) % 3];
        [
            a + (s - a) * SHARED_VERTEX_OFFSET,
            b + (s - b) * SHARED_VERTEX_OFFSET,
        ]
    };
    let s1 = witness(t1, i1);
    let s2 = witness(t2, i2);
    segment_triangle_intersect(&s1, t2) || segment_triangle_intersect(&s2, t1)
}

/// Does the open segment cross the open triangle interior?
fn segment_triangle_intersect(seg: &[Vec3; 2], tri: &[Vec3; 3]) -> bool {
    let dir = seg[1] - seg[0];
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() <= 1e-14 * e1.norm() * e2.norm() * dir.norm() {
        return false; // parallel to the plane: no transversal crossing
    }
    let inv = 1.0 / det;
    let s = seg[0] - tri[0];
    let u = s.dot(&p) * inv;
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    let t = e2.dot(&q) * inv;
    const E: f64 = 1e-12;
    u > E && v > E && u + v < 1.0 - E && t > E && t < 1.0 - E
}

// --- 2 shared vertices (shared edge) -----------------------------------------

fn shared_edge_case(t1: &[Vec3; 3], t2: &[Vec3; 3], pairs: [(usize, usize); 2]) -> bool {
    let scale = longest_edge(t1).max(longest_edge(t2));
    let eps = 1e-12 * scale;

    let third = |t: &[Vec3; 3], used: [usize; 2]| -> Vec3 {
        let i = (0..3).find(|i| !used.contains(i)).unwrap();
        t[i]
    };
    let p = third(t1, [pairs[0].0, pairs[1].0]);
    let q = third(t2, [pairs[0].1, pairs[1].1]);
    let (e0, e1) = (t1[pairs[0].0], t1[pairs[1].0]);

    // Interpenetration through a shared edge requires the pair to be folded
    // flat: coplanar, with both third vertices on the same side of the edge.
    let n1 = (t1[1] - t1[0]).cross(&(t1[2] - t1[0]));
    if ((q - e0).dot(&n1) / n1.norm()).abs() > eps {
        return false;
    }

    let edge = e1 - e0;
    let side_p = edge.cross(&(p - e0));
    let side_q = edge.cross(&(q - e0));
    let dot = side_p.dot(&side_q);
    let thresh = eps * eps * edge.norm_squared();
    dot > thresh
}
