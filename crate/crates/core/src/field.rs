//! Discrete differential operators on SDF grids: per-node gradient
//! estimation with order-adaptive stencils, isosurface edge crossings, and
//! crossing-point normal interpolation.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::grid::{is_sign_change, GridEdge, SdfGrid};
use crate::parallel;

/// Gradients with norm below this are treated as degenerate (no reliable
/// direction).
pub const GRADIENT_EPSILON: f64 = 1e-8;

/// Which finite-difference stencil applies at a given 1-D index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilKind {
    /// Fourth-order central: `(-f[i+2] + 8 f[i+1] - 8 f[i-1] + f[i-2]) / 12h`.
    Central5,
    /// First-order forward: `(f[i+1] - f[i]) / h`.
    Forward2,
    /// First-order backward: `(f[i] - f[i-1]) / h`.
    Backward2,
}

/// Stencil selection: central wherever its five samples fit; otherwise the
/// one-sided difference that stays in bounds, preferring forward when both do.
pub fn stencil_kind(index: usize, dim: usize) -> StencilKind {
    debug_assert!(index < dim && dim >= 2);
    if index >= 2 && index + 3 <= dim {
        StencilKind::Central5
    } else if index < 2 && index + 1 < dim {
        StencilKind::Forward2
    } else {
        StencilKind::Backward2
    }
}

/// Per-node gradient vectors laid out like their source grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    dims: [usize; 3],
    gradients: Vec<Vec3>,
}

impl GradientField {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn gradients(&self) -> &[Vec3] {
        &self.gradients
    }

    pub fn linear_index(&self, node: [usize; 3]) -> usize {
        (node[0] * self.dims[1] + node[1]) * self.dims[2] + node[2]
    }

    pub fn gradient(&self, node: [usize; 3]) -> Vec3 {
        self.gradients[self.linear_index(node)]
    }

    /// Unit gradient, or `None` when the norm is below [`GRADIENT_EPSILON`].
    pub fn unit_gradient(&self, node: [usize; 3]) -> Option<Vec3> {
        let g = self.gradient(node);
        let n = g.norm();
        (n >= GRADIENT_EPSILON).then(|| g / n)
    }
}

/// Estimate the gradient at every node with per-axis stencil selection.
pub fn estimate_gradients(grid: &SdfGrid) -> GradientField {
    let dims = grid.dims();
    let h = grid.spacing();
    let gradients = parallel::map_range(grid.node_count(), |idx| {
        let node = grid.node_of(idx);
        let mut g = Vec3::zeros();
        for axis in 0..3 {
            let i = node[axis];
            let at = |offset: isize| {
                let mut n = node;
                n[axis] = (i as isize + offset) as usize;
                grid.value(n)
            };
            g[axis] = match stencil_kind(i, dims[axis]) {
                StencilKind::Central5 => {
                    (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h)
                }
                StencilKind::Forward2 => (at(1) - at(0)) / h,
                StencilKind::Backward2 => (at(0) - at(-1)) / h,
            };
        }
        g
    });
    GradientField { dims, gradients }
}

/// Where an isosurface crosses a grid edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCrossing {
    /// Linear parameter from the edge's lower node toward its upper node,
    /// in `[0, 1]`.
    pub t: f64,
    /// World-space crossing point.
    pub position: Vec3,
}

/// Locate the zero crossing on a sign-change edge by linear interpolation:
/// `t = f_lo / (f_lo - f_hi)`.
///
/// Errors when the endpoint values are on the same side of the surface
/// (the sign of 0 counts as positive).
pub fn edge_crossing(grid: &SdfGrid, edge: GridEdge) -> Result<EdgeCrossing> {
    let (lo, hi) = edge.endpoints();
    let f_lo = grid.value(lo);
    let f_hi = grid.value(hi);
    if !is_sign_change(f_lo, f_hi) {
        return Err(Error::Precondition(format!(
            "edge {edge:?} has no sign change ({f_lo} to {f_hi})"
        )));
    }
    let t = f_lo / (f_lo - f_hi);
    let mut position = grid.node_position(lo);
    position[edge.axis.index()] += t * grid.spacing();
    Ok(EdgeCrossing { t, position })
}

/// How endpoint gradients are combined into a crossing-point normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalMode {
    /// Blend the unit endpoint gradients by the crossing parameter and
    /// renormalize. Both endpoint gradients of a signed distance field point
    /// outward, so the blend is stable.
    #[default]
    OrientationConsistent,
    /// Weight each unit endpoint gradient by the sign of its node value
    /// before blending. Kept as a deliberately fragile baseline: with equal
    /// endpoint gradients the two halves cancel exactly at `t = 0.5`.
    SignWeighted,
}

/// Unit surface normal at an edge's crossing point.
///
/// Returns `Ok(None)` when either endpoint gradient or the blended vector is
/// degenerate (norm below [`GRADIENT_EPSILON`]); errors when the edge has no
/// sign change or the gradient field does not match the grid.
pub fn interpolated_normal(
    grid: &SdfGrid,
    gradients: &GradientField,
    edge: GridEdge,
    mode: NormalMode,
) -> Result<Option<Vec3>> {
    if gradients.dims() != grid.dims() {
        return Err(Error::DimensionMismatch(format!(
            "gradient field dims {:?} do not match grid dims {:?}",
            gradients.dims(),
            grid.dims()
        )));
    }
    let crossing = edge_crossing(grid, edge)?;
    let (lo, hi) = edge.endpoints();
    let (Some(n_lo), Some(n_hi)) = (gradients.unit_gradient(lo), gradients.unit_gradient(hi))
    else {
        return Ok(None);
    };
    let t = crossing.t;
    let blended = match mode {
        NormalMode::OrientationConsistent => (1.0 - t) * n_lo + t * n_hi,
        NormalMode::SignWeighted => {
            let sign = |v: f64| if v < 0.0 { -1.0 } else { 1.0 };
            (1.0 - t) * sign(grid.value(lo)) * n_lo + t * sign(grid.value(hi)) * n_hi
        }
    };
    let norm = blended.norm();
    Ok((norm >= GRADIENT_EPSILON).then(|| blended / norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample_analytic, AnalyticShape, Axis};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_field_gradients_are_exact_everywhere() {
        // Integer-clean construction: every node value and every stencil is
        // exact, so even the one-sided boundary stencils reproduce the slope
        // bit-for-bit.
        let (a, b, c) = (3.0, -2.0, 5.0);
        let g = SdfGrid::from_fn([6, 5, 4], Vec3::repeat(-2.0), 1.0, true, |p| {
            a * p.x + b * p.y + c * p.z
        })
        .unwrap();
        let grads = estimate_gradients(&g);
        for v in grads.gradients() {
            assert_eq!(*v, Vec3::new(a, b, c));
        }
    }

    #[test]
    fn quadratic_field_interior_gradient_reference_value() {
        // f = x^2 on a grid with spacing 0.1; at the interior node x = 0.3 the
        // central stencil reproduces f' = 0.6 to machine precision.
        let g = SdfGrid::from_fn([8, 5, 5], Vec3::zeros(), 0.1, true, |p| p.x * p.x).unwrap();
        let grads = estimate_gradients(&g);
        let v = grads.gradient([3, 2, 2]);
        assert_relative_eq!(v.x, 0.6, max_relative = 1e-12);
        assert_relative_eq!(v.y, 0.0, epsilon = 1e-15);
        assert_relative_eq!(v.z, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn quartic_field_interior_gradients_within_1e10() {
        // The central stencil is exact through degree 4, so only rounding
        // remains at interior nodes.
        let f = |p: Vec3| {
            p.x.powi(4) - 2.0 * p.x.powi(3) * p.y + 3.0 * p.y * p.y * p.z * p.z
                + 0.5 * p.z.powi(4)
                - p.x * p.y * p.z
        };
        let df = |p: Vec3| {
            Vec3::new(
                4.0 * p.x.powi(3) - 6.0 * p.x * p.x * p.y - p.y * p.z,
                -2.0 * p.x.powi(3) + 6.0 * p.y * p.z * p.z - p.x * p.z,
                6.0 * p.y * p.y * p.z + 2.0 * p.z.powi(3) - p.x * p.y,
            )
        };
        let g = SdfGrid::from_fn([9, 9, 9], Vec3::repeat(-1.0), 0.25, true, f).unwrap();
        let grads = estimate_gradients(&g);
        for i in 2..7 {
            for j in 2..7 {
                for k in 2..7 {
                    let p = g.node_position([i, j, k]);
                    let err = (grads.gradient([i, j, k]) - df(p)).norm();
                    assert!(err <= 1e-10, "node ({i},{j},{k}) error {err}");
                }
            }
        }
    }

    #[test]
    fn sphere_gradients_point_radially() {
        let sphere = AnalyticShape::Sphere {
            center: Vec3::zeros(),
            radius: 0.6,
        };
        let g = sample_analytic(&sphere, [24, 24, 24], Vec3::repeat(-1.0), 2.0 / 23.0).unwrap();
        let grads = estimate_gradients(&g);
        let h = g.spacing();
        for idx in 0..g.node_count() {
            let node = g.node_of(idx);
            let p = g.node_position(node);
            // Too close to the center the distance field's curvature blows up
            // and no five-node stencil can resolve the direction.
            if p.norm() < 2.5 * h {
                continue;
            }
            let cos = grads.gradients()[idx].normalize().dot(&p.normalize());
            let interior = node
                .iter()
                .zip(&g.dims())
                .all(|(&i, &d)| stencil_kind(i, d) == StencilKind::Central5);
            if interior {
                assert!(cos > 0.999, "interior node {node:?}: cos = {cos}");
            } else {
                assert!(cos > 0.995, "boundary node {node:?}: cos = {cos}");
            }
        }
    }

    #[test]
    fn stencil_selection_matches_bounds_oracle() {
        for dim in 2..40 {
            for i in 0..dim {
                let kind = stencil_kind(i, dim);
                // Oracle phrased off the stencils' sample footprints: central
                // needs i-2..=i+2 inside, forward needs i+1, backward needs
                // i-1; forward wins whenever the start-side rule applies.
                let central_fits = i >= 2 && i + 2 < dim;
                let expected = if central_fits {
                    StencilKind::Central5
                } else if i < 2 && i + 1 < dim {
                    StencilKind::Forward2
                } else {
                    StencilKind::Backward2
                };
                assert_eq!(kind, expected, "i={i} dim={dim}");
                // Whatever was chosen, its samples must be in bounds.
                match kind {
                    StencilKind::Central5 => assert!(i >= 2 && i + 2 < dim),
                    StencilKind::Forward2 => assert!(i + 1 < dim),
                    StencilKind::Backward2 => assert!(i >= 1),
                }
            }
        }
    }

    #[test]
    fn edge_crossing_zeroes_the_interpolant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let f_lo: f64 = rng.gen_range(1e-6..4.0);
            let f_hi: f64 = -rng.gen_range(1e-6..4.0);
            let (f_lo, f_hi) = if rng.gen() { (f_lo, f_hi) } else { (f_hi, f_lo) };
            let g = SdfGrid::new(
                [2, 2, 2],
                Vec3::zeros(),
                0.5,
                vec![f_lo, f_hi, f_lo, f_hi, f_lo, f_hi, f_lo, f_hi],
                true,
            )
            .unwrap();
            let edge = GridEdge {
                axis: Axis::Z,
                node: [0, 0, 0],
            };
            let c = edge_crossing(&g, edge).unwrap();
            assert!((0.0..=1.0).contains(&c.t));
            let residual = (1.0 - c.t) * f_lo + c.t * f_hi;
            let scale = f_lo.abs().max(f_hi.abs());
            assert!(
                residual.abs() <= 1e-15 * scale,
                "residual {residual} at t = {}",
                c.t
            );
        }
    }

    #[test]
    fn edge_crossing_respects_zero_sign_convention() {
        // f_lo = 0 counts as outside: against a negative neighbor that is a
        // crossing at t = 0; against a positive neighbor it is no crossing.
        let g = SdfGrid::new(
            [2, 2, 2],
            Vec3::zeros(),
            1.0,
            vec![0.0, -1.0, 0.0, -1.0, 0.0, -1.0, 0.0, -1.0],
            true,
        )
        .unwrap();
        let edge = GridEdge {
            axis: Axis::Z,
            node: [0, 0, 0],
        };
        let c = edge_crossing(&g, edge).unwrap();
        assert_eq!(c.t, 0.0);
        assert_eq!(c.position, Vec3::zeros());

        let g = SdfGrid::new(
            [2, 2, 2],
            Vec3::zeros(),
            1.0,
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            true,
        )
        .unwrap();
        assert!(edge_crossing(&g, edge).is_err());
    }

    #[test]
    fn normal_interpolation_modes_on_a_plane() {
        // Plane x = 0.5 sampled symmetrically: the crossing sits at t = 0.5
        // with identical endpoint gradients (1, 0, 0).
        let plane = AnalyticShape::Plane {
            normal: Vec3::x(),
            offset: 0.5,
        };
        let g = sample_analytic(&plane, [2, 2, 2], Vec3::zeros(), 1.0).unwrap();
        let grads = estimate_gradients(&g);
        let edge = GridEdge {
            axis: Axis::X,
            node: [0, 0, 0],
        };
        let n = interpolated_normal(&g, &grads, edge, NormalMode::OrientationConsistent)
            .unwrap()
            .expect("consistent blend is non-degenerate");
        assert_eq!(n, Vec3::x());

        // Sign weighting flips the inside-node term, so the halves cancel
        // exactly and the normal degenerates.
        let n = interpolated_normal(&g, &grads, edge, NormalMode::SignWeighted).unwrap();
        assert_eq!(n, None);
    }

    #[test]
    fn normal_interpolation_rejects_mismatched_fields() {
        let plane = AnalyticShape::Plane {
            normal: Vec3::x(),
            offset: 0.5,
        };
        let g = sample_analytic(&plane, [3, 3, 3], Vec3::zeros(), 0.5).unwrap();
        let other = sample_analytic(&plane, [4, 4, 4], Vec3::zeros(), 0.5).unwrap();
        let grads = estimate_gradients(&other);
        let edge = GridEdge {
            axis: Axis::X,
            node: [0, 0, 0],
        };
        assert!(matches!(
            interpolated_normal(&g, &grads, edge, NormalMode::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
