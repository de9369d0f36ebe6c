//! Geometry kernel: triangle meshes, exact closest-point queries, triangle
//! intersection tests, ray parity, surface sampling, and OBJ I/O.
//!
//! Conventions used throughout:
//! - vertices are `f64` 3-vectors ([`Vec3`]);
//! - triangles are CCW index triples; the face normal is
//!   `(b - a) × (c - a)`, normalized;
//! - all queries are deterministic: ties in distance are broken by the lowest
//!   triangle index, and random sampling is driven by an explicit seed.

mod closest;
mod index;
mod obj;
mod tri_tri;

pub use closest::{closest_point, closest_point_on_triangle, ClosestPoint, Region};
pub use index::{PointIndex, SpatialIndex};
pub use obj::{read_obj, read_obj_from, write_obj, write_obj_to};
pub use tri_tri::{is_degenerate_triangle, tri_tri_intersect};

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Vec3 = nalgebra::Vector3<f64>;

/// Indexed triangle mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Build a mesh, validating that every index is in range.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len() as u32;
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidParameter(format!(
                    "triangle {t} references vertex out of range (mesh has {n} vertices)"
                )));
            }
        }
        Ok(Self { vertices, triangles })
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Corner positions of triangle `t`.
    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [i, j, k] = self.triangles[t];
        [
            self.vertices[i as usize],
            self.vertices[j as usize],
            self.vertices[k as usize],
        ]
    }

    /// Unnormalized face normal `(b - a) × (c - a)`; its length is twice the
    /// triangle area.
    pub fn face_normal_raw(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle(t);
        (b - a).cross(&(c - a))
    }

    /// Unit face normal, or `None` for a degenerate (zero-area) triangle.
    pub fn face_normal(&self, t: usize) -> Option<Vec3> {
        let n = self.face_normal_raw(t);
        let len = n.norm();
        if len > 0.0 {
            Some(n / len)
        } else {
            None
        }
    }

    pub fn face_area(&self, t: usize) -> f64 {
        0.5 * self.face_normal_raw(t).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.face_area(t)).sum()
    }

    /// Axis-aligned bounding box, or `None` for a mesh with no vertices.
    pub fn bbox(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        let (mut lo, mut hi) = (first, first);
        for v in it {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        Some((lo, hi))
    }

    /// Diagonal length of the bounding box (0 for empty meshes).
    pub fn bbox_diagonal(&self) -> f64 {
        self.bbox().map(|(lo, hi)| (hi - lo).norm()).unwrap_or(0.0)
    }

    /// True when every undirected edge is used by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        if self.triangles.is_empty() {
            return false;
        }
        let mut counts = std::collections::HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (i, j) = (tri[e], tri[(e + 1) % 3]);
                let key = (i.min(j), i.max(j));
                *counts.entry(key).or_insert(0u32) += 1;
            }
        }
        counts.values().all(|&c| c == 2)
    }
}

/// One point drawn from a mesh surface.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceSample {
    pub position: Vec3,
    /// Unit normal of the face the sample lies on.
    pub normal: Vec3,
    pub face: u32,
}

/// Draw `count` points uniformly by area from the mesh surface.
///
/// Faces are selected by inverting the cumulative-area table; the position
/// within a face uses the square-root barycentric warp, so the distribution is
/// uniform over the surface. Deterministic for a fixed `seed`.
pub fn sample_surface(mesh: &TriMesh, count: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    let mut cum = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.face_area(t);
        cum.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::EmptyMesh(
            "surface sampling requires a mesh with positive total area".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.gen::<f64>() * total;
        // First face whose cumulative area exceeds the target; zero-area faces
        // never satisfy the strict inequality.
        let face = cum.partition_point(|&c| c <= target).min(cum.len() - 1);
        let [a, b, c] = mesh.triangle(face);
        let (u, v): (f64, f64) = (rng.gen(), rng.gen());
        let su = u.sqrt();
        let (b0, b1, b2) = (1.0 - su, su * (1.0 - v), su * v);
        let normal = mesh
            .face_normal(face)
            .expect("zero-area faces are never selected");
        out.push(SurfaceSample {
            position: a * b0 + b * b1 + c * b2,
            normal,
            face: face as u32,
        });
    }
    Ok(out)
}

/// Barycentric band (relative) around triangle boundaries inside which a ray
/// hit counts as grazing and forces a re-cast from a jittered origin.
const GRAZE_BAND: f64 = 1e-9;
const MAX_JITTER_ATTEMPTS: u32 = 32;

/// Parity of ray/mesh crossings from `origin` along `direction`.
///
/// An odd crossing count means the origin is inside. Hits that land within
/// [`GRAZE_BAND`] of a triangle edge/vertex (or at the origin itself, or in a
/// near-parallel configuration) are ambiguous: the ray is re-cast from an
/// origin offset by a deterministic jitter until every hit is unambiguous.
pub fn ray_parity(mesh: &TriMesh, index: &SpatialIndex, origin: Vec3, direction: Vec3) -> bool {
    let dir_norm = direction.norm();
    assert!(dir_norm > 0.0, "ray direction must be nonzero");
    let dir = direction / dir_norm;
    let scale = mesh.bbox_diagonal().max(1e-300);

    let mut last_parity = false;
    for attempt in 0..MAX_JITTER_ATTEMPTS {
        let o = origin + jitter_offset(attempt, scale);
        match cast_parity(mesh, index, o, dir, scale) {
            Some(parity) => return parity,
            None => last_parity = false,
        }
    }
    let _ = last_parity;
    false // every attempt grazed: measure-zero pathology; report outside
}

/// Inside test by majority vote of axis-parallel parity rays (+x, +y, +z).
pub fn inside_by_parity(mesh: &TriMesh, index: &SpatialIndex, point: Vec3) -> bool {
    let votes = [Vec3::x(), Vec3::y(), Vec3::z()]
        .iter()
        .filter(|&&d| ray_parity(mesh, index, point, d))
        .count();
    votes >= 2
}

/// Deterministic jitter for re-cast attempt `attempt` (attempt 0 is no jitter).
fn jitter_offset(attempt: u32, scale: f64) -> Vec3 {
    if attempt == 0 {
        return Vec3::zeros();
    }
    let mut h = splitmix64(0x9e3779b97f4a7c15 ^ attempt as u64);
    let mut comp = || {
        h = splitmix64(h);
        // Map to [-1, 1).
        (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    };
    let v = Vec3::new(comp(), comp(), comp());
    v * (1e-6 * scale * attempt as f64)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Count crossings along one ray. `None` signals an ambiguous (grazing) hit.
fn cast_parity(
    mesh: &TriMesh,
    index: &SpatialIndex,
    origin: Vec3,
    dir: Vec3,
    scale: f64,
) -> Option<bool> {
    let t_band = GRAZE_BAND * scale;
    let mut crossings = 0u64;
    for &t in &index.triangles_along_ray(origin, dir) {
        let [a, b, c] = mesh.triangle(t as usize);
        match ray_triangle(origin, dir, a, b, c, t_band) {
            RayHit::Counted => crossings += 1,
            RayHit::Miss => {}
            RayHit::Grazing => return None,
        }
    }
    Some(crossings % 2 == 1)
}

enum RayHit {
    Counted,
    Miss,
    Grazing,
}

/// Möller–Trumbore with an explicit ambiguity band: hits strictly inside the
/// triangle and with `t > t_band` count; anything inside the fattened triangle
/// but near an edge, vertex, the origin, or a parallel configuration grazes.
fn ray_triangle(origin: Vec3, dir: Vec3, a: Vec3, b: Vec3, c: Vec3, t_band: f64) -> RayHit {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    let big = e1.norm() * e2.norm();
    if det.abs() <= 1e-14 * big {
        // Near-parallel. Only ambiguous if the ray runs inside the triangle's
        // thickened plane; otherwise it cleanly misses.
        let n = e1.cross(&e2);
        let nn = n.norm();
        if nn == 0.0 {
            return RayHit::Miss; // degenerate triangle: no area to cross
        }
        let dist_plane = (origin - a).dot(&n) / nn;
        if dist_plane.abs() <= t_band {
            return RayHit::Grazing;
        }
        return RayHit::Miss;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    let t = e2.dot(&q) * inv;

    let inside_strict =
        u > GRAZE_BAND && v > GRAZE_BAND && u + v < 1.0 - GRAZE_BAND && t > t_band;
    if inside_strict {
        return RayHit::Counted;
    }
    let inside_fat =
        u > -GRAZE_BAND && v > -GRAZE_BAND && u + v < 1.0 + GRAZE_BAND && t > -t_band;
    if inside_fat {
        return RayHit::Grazing;
    }
    RayHit::Miss
}
