//! Self-supervised vertex placement for dual contouring.
//!
//! Instead of solving a per-cell QEF, every active cell's vertex is a free
//! variable, reparameterized through a scaled sigmoid so it can never leave
//! its cell, and all vertices are optimized jointly with Adam against two
//! grid-supervised losses:
//!
//! - a *distance* term: at every near-surface grid node, the unsigned
//!   distance to the current mesh must match `|f|`;
//! - a *normal* term: each quad's geometric normal must align with the
//!   field normal interpolated at its defining edge crossing.
//!
//! Both losses differentiate exactly: the distance term through a frozen
//! closest-point assignment (an envelope gradient), the normal term through
//! the cross products themselves.

use crate::contour::{dual_topology, DualMesh, Quad};
use crate::error::{Error, Result};
use crate::field::{estimate_gradients, interpolated_normal, GradientField, NormalMode};
use crate::geom::{self, SpatialIndex, TriMesh, Vec3};
use crate::grid::{near_surface_nodes, NodeSet, SdfGrid};
use crate::parallel;

/// Distance-term contributions closer than this to the mesh are skipped:
/// the direction `(g - c) / d` is undefined at `d = 0`.
pub const DISTANCE_TERM_EPSILON: f64 = 1e-9;

/// Sigmoid outputs are clamped to `[SIGMOID_CLAMP, 1 - SIGMOID_CLAMP]` so
/// vertices stay strictly inside their cells.
pub const SIGMOID_CLAMP: f64 = 1e-12;

/// Settings for the vertex optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct SdcConfig {
    /// Weight of the normal-alignment loss.
    pub alpha_normal: f64,
    /// Shell half-width in cells: nodes with `|f| < tau * spacing` supervise
    /// the distance loss.
    pub tau: f64,
    /// Sigmoid input scale: `v = cell_min + spacing * sigmoid(scale * theta)`.
    pub sigmoid_scale: f64,
    pub max_iters: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    /// Stop when the best loss improves by less than
    /// `convergence_tolerance` (relatively) over this many iterations.
    pub convergence_window: usize,
    pub convergence_tolerance: f64,
    /// How edge-crossing target normals are interpolated.
    pub normal_mode: NormalMode,
}

impl Default for SdcConfig {
    fn default() -> Self {
        Self {
            alpha_normal: 0.01,
            tau: 2.0,
            sigmoid_scale: 10.0,
            max_iters: 500,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            convergence_window: 20,
            convergence_tolerance: 1e-6,
            normal_mode: NormalMode::OrientationConsistent,
        }
    }
}

impl SdcConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(msg.into()))
            }
        };
        check(self.alpha_normal >= 0.0, "alpha_normal must be non-negative")?;
        check(self.tau > 0.0, "tau must be positive")?;
        check(self.sigmoid_scale > 0.0, "sigmoid_scale must be positive")?;
        check(self.max_iters > 0, "max_iters must be positive")?;
        check(self.learning_rate > 0.0, "learning_rate must be positive")?;
        check(
            (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2),
            "Adam betas must lie in [0, 1)",
        )?;
        check(self.adam_epsilon > 0.0, "adam_epsilon must be positive")?;
        check(self.convergence_window > 0, "convergence_window must be positive")?;
        check(
            self.convergence_tolerance >= 0.0,
            "convergence_tolerance must be non-negative",
        )
    }
}

/// Per-cell vertex parameters: `v = cell_min + spacing * sigmoid(scale * theta)`,
/// with the sigmoid output clamped away from 0 and 1. `theta = 0` puts the
/// vertex at the cell center.
#[derive(Debug, Clone)]
pub struct CellVertexParams {
    pub theta: Vec<Vec3>,
    cell_mins: Vec<Vec3>,
    spacing: f64,
    scale: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl CellVertexParams {
    pub fn centered(grid: &SdfGrid, cells: &[[usize; 3]], scale: f64) -> Self {
        Self {
            theta: vec![Vec3::zeros(); cells.len()],
            cell_mins: cells.iter().map(|&c| grid.cell_min(c)).collect(),
            spacing: grid.spacing(),
            scale,
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Current vertex positions.
    pub fn positions(&self) -> Vec<Vec3> {
        self.positions_and_jacobians().0
    }

    /// Positions together with the diagonal Jacobian `dv/dtheta` per axis.
    pub fn positions_and_jacobians(&self) -> (Vec<Vec3>, Vec<Vec3>) {
        let mut positions = Vec::with_capacity(self.len());
        let mut jacobians = Vec::with_capacity(self.len());
        for (theta, min) in self.theta.iter().zip(&self.cell_mins) {
            let mut p = Vec3::zeros();
            let mut j = Vec3::zeros();
            for a in 0..3 {
                let s = sigmoid(self.scale * theta[a]).clamp(SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP);
                p[a] = min[a] + self.spacing * s;
                j[a] = self.spacing * self.scale * s * (1.0 - s);
            }
            positions.push(p);
            jacobians.push(j);
        }
        (positions, jacobians)
    }
}

/// A shell node's frozen closest-point assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeAssignment {
    pub triangle: u32,
    pub barycentric: Vec3,
    pub distance: f64,
}

/// Value and gradients of the distance loss, plus the per-sample closest
/// point assignments the gradients were computed under.
#[derive(Debug, Clone)]
pub struct DistanceLoss {
    pub value: f64,
    /// d(loss)/d(vertex), aligned with `mesh.vertices`.
    pub vertex_gradients: Vec<Vec3>,
    /// One entry per sample; `None` when the sample was skipped for sitting
    /// on the mesh.
    pub assignments: Vec<Option<NodeAssignment>>,
}

/// `sum_g (|f(g)| - d(g, mesh))^2` over the sample points, with exact
/// envelope gradients under the per-evaluation closest-point assignment.
pub fn distance_loss(
    points: &[Vec3],
    target_abs: &[f64],
    mesh: &TriMesh,
    index: &SpatialIndex,
) -> DistanceLoss {
    assert_eq!(points.len(), target_abs.len());
    struct Term {
        value: f64,
        assignment: NodeAssignment,
        coeff_dir: Vec3, // 2 (|f| - d) * (g - c) / d
    }
    let terms: Vec<Option<Term>> = parallel::map_range(points.len(), |i| {
        let g = points[i];
        let cp = geom::closest_point(mesh, index, g).ok()?;
        if cp.distance < DISTANCE_TERM_EPSILON {
            return None;
        }
        let gap = target_abs[i] - cp.distance;
        Some(Term {
            value: gap * gap,
            assignment: NodeAssignment {
                triangle: cp.triangle,
                barycentric: cp.barycentric,
                distance: cp.distance,
            },
            coeff_dir: 2.0 * gap * (g - cp.point) / cp.distance,
        })
    });

    let values: Vec<f64> = terms
        .iter()
        .map(|t| t.as_ref().map_or(0.0, |t| t.value))
        .collect();
    let value = parallel::tree_sum(&values);

    let mut vertex_gradients = vec![Vec3::zeros(); mesh.vertices.len()];
    let mut assignments = Vec::with_capacity(terms.len());
    for term in &terms {
        assignments.push(term.as_ref().map(|t| t.assignment));
        if let Some(t) = term {
            let tri = mesh.triangles[t.assignment.triangle as usize];
            for (corner, &vi) in tri.iter().enumerate() {
                // d = |g - sum_i b_i v_i| under the frozen assignment, so
                // d(d)/d(v_i) = -b_i (g - c) / d and the term gradient is
                // 2 (|f| - d) b_i (g - c) / d.
                vertex_gradients[vi as usize] += t.assignment.barycentric[corner] * t.coeff_dir;
            }
        }
    }
    DistanceLoss {
        value,
        vertex_gradients,
        assignments,
    }
}

/// The distance loss evaluated under *frozen* closest-triangle assignments:
/// each sample measures its distance to the triangle it was assigned, not to
/// the whole mesh. Smooth in the vertices, which makes it the right target
/// for finite-difference checks of the envelope gradient.
pub fn distance_loss_frozen(
    points: &[Vec3],
    target_abs: &[f64],
    mesh: &TriMesh,
    assignments: &[Option<NodeAssignment>],
) -> f64 {
    assert_eq!(points.len(), assignments.len());
    let values: Vec<f64> = parallel::map_range(points.len(), |i| {
        let Some(a) = assignments[i] else {
            return 0.0;
        };
        let [ta, tb, tc] = mesh.triangle(a.triangle as usize);
        let (point, _, _) = geom::closest_point_on_triangle(points[i], ta, tb, tc);
        let gap = target_abs[i] - (points[i] - point).norm();
        gap * gap
    });
    parallel::tree_sum(&values)
}

/// Interpolated field normal at each quad's defining edge crossing.
pub fn quad_target_normals(
    grid: &SdfGrid,
    gradients: &GradientField,
    quads: &[Quad],
    mode: NormalMode,
) -> Result<Vec<Option<Vec3>>> {
    quads
        .iter()
        .map(|q| interpolated_normal(grid, gradients, q.edge, mode))
        .collect()
}

/// Value and vertex gradients of the normal-alignment loss.
#[derive(Debug, Clone)]
pub struct NormalLoss {
    pub value: f64,
    pub vertex_gradients: Vec<Vec3>,
    /// Quads skipped for being degenerate or lacking a target normal.
    pub skipped: usize,
}

/// `sum_q (1 - cos(n_quad, n_target))` with exact cross-product gradients.
///
/// A quad's geometric normal is the normalized sum `N` of its two triangle
/// cross products; quads with `|N| / 2 < 1e-12 * spacing^2` are skipped, as
/// are quads without a target.
pub fn normal_loss(
    vertices: &[Vec3],
    quads: &[Quad],
    targets: &[Option<Vec3>],
    spacing: f64,
) -> NormalLoss {
    assert_eq!(quads.len(), targets.len());
    let area_floor = 1e-12 * spacing * spacing;
    struct Term {
        value: f64,
        corners: [u32; 4],
        grads: [Vec3; 4],
    }
    let terms: Vec<Option<Term>> = parallel::map_range(quads.len(), |qi| {
        let target = targets[qi]?;
        let [i0, i1, i2, i3] = quads[qi].corners;
        let (v0, v1, v2, v3) = (
            vertices[i0 as usize],
            vertices[i1 as usize],
            vertices[i2 as usize],
            vertices[i3 as usize],
        );
        let n = (v1 - v0).cross(&(v2 - v0)) + (v2 - v0).cross(&(v3 - v0));
        let norm = n.norm();
        if norm / 2.0 < area_floor {
            return None;
        }
        let unit = n / norm;
        let cos = unit.dot(&target);
        // d(1 - cos)/dN; identically zero at perfect alignment.
        let g_n = (cos * unit - target) / norm;
        // d(N . u)/d(corner) for N = (b-a)x(c-a): a -> (b-c)xu, b -> (c-a)xu,
        // c -> (a-b)xu, accumulated over both triangles (0,1,2) and (0,2,3).
        let grads = [
            (v1 - v2).cross(&g_n) + (v2 - v3).cross(&g_n),
            (v2 - v0).cross(&g_n),
            (v0 - v1).cross(&g_n) + (v3 - v0).cross(&g_n),
            (v0 - v2).cross(&g_n),
        ];
        Some(Term {
            value: 1.0 - cos,
            corners: quads[qi].corners,
            grads,
        })
    });

    let values: Vec<f64> = terms
        .iter()
        .map(|t| t.as_ref().map_or(0.0, |t| t.value))
        .collect();
    let value = parallel::tree_sum(&values);
    let mut vertex_gradients = vec![Vec3::zeros(); vertices.len()];
    let mut skipped = 0;
    for term in &terms {
        match term {
            Some(t) => {
                for (corner, &vi) in t.corners.iter().enumerate() {
                    vertex_gradients[vi as usize] += t.grads[corner];
                }
            }
            None => skipped += 1,
        }
    }
    NormalLoss {
        value,
        vertex_gradients,
        skipped,
    }
}

/// Result of the vertex optimization.
#[derive(Debug, Clone)]
pub struct SdcResult {
    pub mesh: DualMesh,
    /// Best total loss seen up to each iteration (monotone non-increasing).
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Extract a dual mesh by optimizing all cell vertices against the grid.
pub fn mesh_sdc(grid: &SdfGrid, config: &SdcConfig) -> Result<SdcResult> {
    config.validate()?;
    let (active_cells, quads) = dual_topology(grid);
    if quads.is_empty() {
        return Err(Error::EmptyMesh(
            "grid has no interior surface crossings".into(),
        ));
    }
    let gradients = estimate_gradients(grid);
    let targets = quad_target_normals(grid, &gradients, &quads, config.normal_mode)?;
    let shell = near_surface_nodes(grid, config.tau);
    let result = optimize_vertices(grid, &active_cells, &quads, &targets, &shell, config)?;
    Ok(result)
}

/// Jointly optimize the vertices of a fixed dual topology with Adam.
///
/// Every iteration re-triangulates, rebuilds the spatial index, and
/// re-derives closest-point assignments, so the distance gradients always
/// reflect the current surface. The returned vertices correspond to the best
/// loss ever seen, not the last iterate.
pub fn optimize_vertices(
    grid: &SdfGrid,
    active_cells: &[[usize; 3]],
    quads: &[Quad],
    target_normals: &[Option<Vec3>],
    shell: &NodeSet,
    config: &SdcConfig,
) -> Result<SdcResult> {
    config.validate()?;
    let triangles: Vec<[u32; 3]> = quads
        .iter()
        .flat_map(|q| {
            let [a, b, c, d] = q.corners;
            [[a, b, c], [a, c, d]]
        })
        .collect();
    let points: Vec<Vec3> = shell.iter().map(|&n| grid.node_position(n)).collect();
    let target_abs: Vec<f64> = shell.iter().map(|&n| grid.value(n).abs()).collect();

    let mut params = CellVertexParams::centered(grid, active_cells, config.sigmoid_scale);
    let n = params.len();
    let (mut adam_m, mut adam_v) = (vec![Vec3::zeros(); n], vec![Vec3::zeros(); n]);
    let mut best_theta = params.theta.clone();
    let mut best_loss = f64::INFINITY;
    let mut trace = Vec::with_capacity(config.max_iters);
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..config.max_iters {
        iterations = it + 1;
        let (positions, jacobians) = params.positions_and_jacobians();
        let mesh = TriMesh {
            vertices: positions,
            triangles: triangles.clone(),
        };
        let index = SpatialIndex::build(&mesh);
        let d_loss = distance_loss(&points, &target_abs, &mesh, &index);
        let n_loss = normal_loss(&mesh.vertices, quads, target_normals, grid.spacing());
        let total = d_loss.value + config.alpha_normal * n_loss.value;
        if !total.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss at iteration {it}"
            )));
        }
        if total < best_loss {
            best_loss = total;
            best_theta.copy_from_slice(&params.theta);
        }
        trace.push(best_loss);

        if it + 1 >= config.convergence_window {
            let before = trace[it + 1 - config.convergence_window];
            let change = (before - best_loss) / before.max(f64::MIN_POSITIVE);
            if change < config.convergence_tolerance {
                converged = true;
                break;
            }
        }

        let t = (it + 1) as f64;
        let bias1 = 1.0 - config.beta1.powf(t);
        let bias2 = 1.0 - config.beta2.powf(t);
        for i in 0..n {
            let grad_v =
                d_loss.vertex_gradients[i] + config.alpha_normal * n_loss.vertex_gradients[i];
            let g = grad_v.component_mul(&jacobians[i]);
            adam_m[i] = config.beta1 * adam_m[i] + (1.0 - config.beta1) * g;
            adam_v[i] = config.beta2 * adam_v[i] + (1.0 - config.beta2) * g.component_mul(&g);
            for a in 0..3 {
                let m_hat = adam_m[i][a] / bias1;
                let v_hat = adam_v[i][a] / bias2;
                params.theta[i][a] -=
                    config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_epsilon);
            }
        }
    }

    params.theta.copy_from_slice(&best_theta);
    let mesh = DualMesh {
        active_cells: active_cells.to_vec(),
        vertices: params.positions(),
        quads: quads.to_vec(),
    };
    Ok(SdcResult {
        mesh,
        trace,
        iterations,
        converged,
    })
}
