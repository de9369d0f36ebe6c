//! Signed-distance grids: storage, analytic shapes, mesh-to-SDF sampling,
//! noise injection, and the binary `.sdfg` file format.
//!
//! Conventions:
//! - node `(i, j, k)` sits at `origin + spacing * (i, j, k)`, computed exactly
//!   in that form;
//! - values are stored in z-fastest linear order: `idx = (i*m + j)*n + k` for
//!   dims `(l, m, n)`;
//! - the sign of 0 is positive everywhere: a node is *inside* iff its value is
//!   strictly negative.
//!
//! Values are `f64` in memory; the file format stores them as `f32`, so a
//! file read back and rewritten is byte-identical, and a grid written then
//! read equals the original after one `f32` quantization.

use crate::error::{Error, Result};
use crate::geom::{self, SpatialIndex, TriMesh, Vec3};
use crate::parallel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::io::{Read, Write};
use std::path::Path;

/// Grid axis. The numeric value indexes into `[usize; 3]` node coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The other two axes, in right-handed cyclic order (x -> (y, z), ...).
    pub fn others(self) -> (usize, usize) {
        match self {
            Axis::X => (1, 2),
            Axis::Y => (2, 0),
            Axis::Z => (0, 1),
        }
    }
}

/// A grid edge, identified by its lower node and direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridEdge {
    pub axis: Axis,
    pub node: [usize; 3],
}

impl GridEdge {
    pub fn endpoints(&self) -> ([usize; 3], [usize; 3]) {
        let mut hi = self.node;
        hi[self.axis.index()] += 1;
        (self.node, hi)
    }
}

/// True when the two values lie on opposite sides of the isosurface under the
/// sign(0) = +1 convention (only strictly negative values are inside).
pub fn is_sign_change(a: f64, b: f64) -> bool {
    (a < 0.0) != (b < 0.0)
}

/// Regular grid of signed (or unsigned) distance values.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    dims: [usize; 3],
    origin: Vec3,
    spacing: f64,
    values: Vec<f64>,
    signed: bool,
}

impl SdfGrid {
    /// Build a grid, validating dimensions, spacing, and value finiteness.
    pub fn new(
        dims: [usize; 3],
        origin: Vec3,
        spacing: f64,
        values: Vec<f64>,
        signed: bool,
    ) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidParameter(format!(
                "grid dims must be at least 2 per axis, got {dims:?}"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive and finite, got {spacing}"
            )));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter("grid origin must be finite".into()));
        }
        let expect = dims[0] * dims[1] * dims[2];
        if values.len() != expect {
            return Err(Error::DimensionMismatch(format!(
                "grid {dims:?} needs {expect} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid value at linear index {i} is not finite"
            )));
        }
        Ok(Self {
            dims,
            origin,
            spacing,
            values,
            signed,
        })
    }

    /// Build by evaluating `f` at every node position.
    pub fn from_fn(
        dims: [usize; 3],
        origin: Vec3,
        spacing: f64,
        signed: bool,
        f: impl Fn(Vec3) -> f64 + Sync + Send,
    ) -> Result<Self> {
        let probe = Self {
            dims,
            origin,
            spacing,
            values: Vec::new(),
            signed,
        };
        let n = dims[0] * dims[1] * dims[2];
        let values = parallel::map_range(n, |idx| f(probe.node_position(probe.node_of(idx))));
        Self::new(dims, origin, spacing, values, signed)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Whether values carry an inside/outside sign (false for grids sampled
    /// from non-watertight meshes).
    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    /// Number of cells per axis (`dims - 1`).
    pub fn cell_dims(&self) -> [usize; 3] {
        [self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1]
    }

    pub fn linear_index(&self, node: [usize; 3]) -> usize {
        debug_assert!(node.iter().zip(&self.dims).all(|(&i, &d)| i < d));
        (node[0] * self.dims[1] + node[1]) * self.dims[2] + node[2]
    }

    pub fn node_of(&self, linear: usize) -> [usize; 3] {
        let k = linear % self.dims[2];
        let rest = linear / self.dims[2];
        let j = rest % self.dims[1];
        let i = rest / self.dims[1];
        [i, j, k]
    }

    pub fn value(&self, node: [usize; 3]) -> f64 {
        self.values[self.linear_index(node)]
    }

    pub fn node_position(&self, node: [usize; 3]) -> Vec3 {
        Vec3::new(
            self.origin.x + self.spacing * node[0] as f64,
            self.origin.y + self.spacing * node[1] as f64,
            self.origin.z + self.spacing * node[2] as f64,
        )
    }

    /// Lower corner of cell `(ci, cj, ck)`.
    pub fn cell_min(&self, cell: [usize; 3]) -> Vec3 {
        self.node_position(cell)
    }

    /// Center of cell `(ci, cj, ck)`.
    pub fn cell_center(&self, cell: [usize; 3]) -> Vec3 {
        self.cell_min(cell) + Vec3::repeat(0.5 * self.spacing)
    }
}

/// Exact signed-distance primitives.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticShape {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    Box {
        center: Vec3,
        half_extents: Vec3,
    },
    /// Torus around the z-axis through `center`: the tube of radius
    /// `minor_radius` around the circle of radius `major_radius`.
    Torus {
        center: Vec3,
        major_radius: f64,
        minor_radius: f64,
    },
    /// Half-space boundary: `f(p) = normal . p - offset` with unit `normal`.
    Plane {
        normal: Vec3,
        offset: f64,
    },
}

impl AnalyticShape {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            AnalyticShape::Sphere { radius, .. } => {
                if !(*radius > 0.0) {
                    return bad(format!("sphere radius must be positive, got {radius}"));
                }
            }
            AnalyticShape::Box { half_extents, .. } => {
                if !half_extents.iter().all(|&h| h > 0.0) {
                    return bad(format!(
                        "box half extents must be positive, got {half_extents:?}"
                    ));
                }
            }
            AnalyticShape::Torus {
                major_radius,
                minor_radius,
                ..
            } => {
                if !(*major_radius > 0.0 && *minor_radius > 0.0) {
                    return bad(format!(
                        "torus radii must be positive, got R={major_radius}, r={minor_radius}"
                    ));
                }
            }
            AnalyticShape::Plane { normal, .. } => {
                if (normal.norm() - 1.0).abs() > 1e-12 {
                    return bad(format!(
                        "plane normal must be unit length, got |n| = {}",
                        normal.norm()
                    ));
                }
            }
        }
        Ok(())
    }

    /// Exact signed distance (negative inside).
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        match self {
            AnalyticShape::Sphere { center, radius } => (p - center).norm() - radius,
            AnalyticShape::Box {
                center,
                half_extents,
            } => {
                let q = (p - center).abs() - half_extents;
                let outside = q.sup(&Vec3::zeros()).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                outside + inside
            }
            AnalyticShape::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                let d = p - center;
                let ring = (d.x * d.x + d.y * d.y).sqrt() - major_radius;
                (ring * ring + d.z * d.z).sqrt() - minor_radius
            }
            AnalyticShape::Plane { normal, offset } => normal.dot(&p) - offset,
        }
    }
}

/// Evaluate an analytic shape's SDF at every node.
pub fn sample_analytic(
    shape: &AnalyticShape,
    dims: [usize; 3],
    origin: Vec3,
    spacing: f64,
) -> Result<SdfGrid> {
    shape.validate()?;
    SdfGrid::from_fn(dims, origin, spacing, true, |p| shape.signed_distance(p))
}

/// Sample distance-to-mesh at every node; the sign comes from ray parity.
///
/// A non-watertight mesh has no reliable inside, so its grid holds unsigned
/// distances and is flagged `!is_signed()`.
pub fn sdf_from_mesh(
    mesh: &TriMesh,
    dims: [usize; 3],
    origin: Vec3,
    spacing: f64,
) -> Result<SdfGrid> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh(
            "cannot sample distances to an empty mesh".into(),
        ));
    }
    let index = SpatialIndex::build(mesh);
    let signed = mesh.is_watertight();
    let probe = SdfGrid {
        dims,
        origin,
        spacing,
        values: Vec::new(),
        signed,
    };
    let n = dims[0] * dims[1] * dims[2];
    let values = parallel::map_range(n, |idx| {
        let p = probe.node_position(probe.node_of(idx));
        let d = geom::closest_point(mesh, &index, p)
            .expect("mesh verified non-empty")
            .distance;
        if signed && geom::inside_by_parity(mesh, &index, p) {
            -d
        } else {
            d
        }
    });
    SdfGrid::new(dims, origin, spacing, values, signed)
}

/// Add zero-mean Gaussian noise with standard deviation `spacing / 3` to every
/// node. Deterministic for a fixed seed.
pub fn add_noise(grid: &SdfGrid, seed: u64) -> SdfGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, grid.spacing / 3.0).expect("positive std dev");
    let values = grid
        .values
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    SdfGrid {
        dims: grid.dims,
        origin: grid.origin,
        spacing: grid.spacing,
        values,
        signed: grid.signed,
    }
}

/// A deduplicated set of grid nodes, sorted by linear index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeSet {
    nodes: Vec<[usize; 3]>,
}

impl NodeSet {
    /// Build from arbitrary node coordinates (sorted and deduplicated here).
    pub fn from_nodes(grid: &SdfGrid, mut nodes: Vec<[usize; 3]>) -> Self {
        nodes.sort_by_key(|&n| grid.linear_index(n));
        nodes.dedup();
        Self { nodes }
    }

    pub fn nodes(&self) -> &[[usize; 3]] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize; 3]> {
        self.nodes.iter()
    }
}

/// Nodes with `|value| < tau * spacing` — the shell the losses are evaluated
/// on. Sorted by linear index by construction.
pub fn near_surface_nodes(grid: &SdfGrid, tau: f64) -> NodeSet {
    let threshold = tau * grid.spacing;
    let mut nodes = Vec::new();
    for idx in 0..grid.node_count() {
        if grid.values[idx].abs() < threshold {
            nodes.push(grid.node_of(idx));
        }
    }
    NodeSet { nodes }
}

// --- binary file format -------------------------------------------------------
//
// Little-endian layout, 44-byte header:
//   offset  size  field
//   0       4     magic "SDFG"
//   4       4     version (u32, = 1)
//   8       12    dims l, m, n (u32 each)
//   20      12    origin x, y, z (f32 each)
//   32      8     spacing (f64)
//   40      1     signed flag (u8, 0 or 1)
//   41      3     reserved (zero)
//   44      ...   l*m*n values (f32 each, z-fastest)

const MAGIC: &[u8; 4] = b"SDFG";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 44;

pub fn write_grid(grid: &SdfGrid, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_grid_to(grid, std::io::BufWriter::new(file))
}

pub fn write_grid_to(grid: &SdfGrid, mut w: impl Write) -> Result<()> {
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    for &d in &grid.dims {
        let d = u32::try_from(d).map_err(|_| {
            Error::InvalidParameter(format!("grid dimension {d} exceeds the format's u32 range"))
        })?;
        header.extend_from_slice(&d.to_le_bytes());
    }
    for a in 0..3 {
        header.extend_from_slice(&(grid.origin[a] as f32).to_le_bytes());
    }
    header.extend_from_slice(&grid.spacing.to_le_bytes());
    header.push(grid.signed as u8);
    header.extend_from_slice(&[0u8; 3]);
    debug_assert_eq!(header.len(), HEADER_LEN);
    w.write_all(&header)?;

    let mut payload = Vec::with_capacity(grid.values.len() * 4);
    for &v in &grid.values {
        payload.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<SdfGrid> {
    let file = std::fs::File::open(path)?;
    read_grid_from(std::io::BufReader::new(file))
}

pub fn read_grid_from(mut r: impl Read) -> Result<SdfGrid> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let fail = |offset: usize, message: String| Error::Format {
        offset: offset as u64,
        message,
    };

    if bytes.len() < HEADER_LEN {
        return Err(fail(
            bytes.len(),
            format!("file truncated inside the {HEADER_LEN}-byte header"),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fail(
            0,
            format!("bad magic {:?}, expected \"SDFG\"", &bytes[0..4]),
        ));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(fail(4, format!("unsupported version {version}, expected 1")));
    }
    let dims = [u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize];
    if dims.iter().any(|&d| d < 2) {
        return Err(fail(8, format!("dims must be at least 2 per axis, got {dims:?}")));
    }
    let mut origin = Vec3::zeros();
    for a in 0..3 {
        let off = 20 + 4 * a;
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
        if !v.is_finite() {
            return Err(fail(off, "non-finite origin component".into()));
        }
        origin[a] = v;
    }
    let spacing = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(fail(32, format!("spacing must be positive and finite, got {spacing}")));
    }
    let signed = match bytes[40] {
        0 => false,
        1 => true,
        other => return Err(fail(40, format!("signed flag must be 0 or 1, got {other}"))),
    };

    let count = dims[0]
        .checked_mul(dims[1])
        .and_then(|p| p.checked_mul(dims[2]))
        .ok_or_else(|| fail(8, format!("dims {dims:?} overflow the node count")))?;
    let need = HEADER_LEN + 4 * count;
    if bytes.len() < need {
        return Err(fail(
            bytes.len(),
            format!(
                "payload truncated: expected {count} f32 values ({} bytes), file has {}",
                need,
                bytes.len()
            ),
        ));
    }
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        let off = HEADER_LEN + 4 * i;
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
        if !v.is_finite() {
            return Err(fail(off, format!("non-finite value at linear index {i}")));
        }
        values.push(v);
    }
    SdfGrid::new(dims, origin, spacing, values, signed)
}
