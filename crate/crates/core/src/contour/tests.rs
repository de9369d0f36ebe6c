use super::*;
use crate::field::estimate_gradients;
use crate::grid::{sample_analytic, AnalyticShape};
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sphere_grid(dims: usize, radius: f64) -> SdfGrid {
    let shape = AnalyticShape::Sphere {
        center: Vec3::zeros(),
        radius,
    };
    sample_analytic(
        &shape,
        [dims, dims, dims],
        Vec3::repeat(-1.0),
        2.0 / (dims - 1) as f64,
    )
    .unwrap()
}

#[test]
fn lookup_tables_are_internally_consistent() {
    assert_eq!(tables::EDGE_TABLE[0], 0);
    assert_eq!(tables::EDGE_TABLE[255], 0);
    for config in 0..256usize {
        // Complementary configurations cross the same edges.
        assert_eq!(tables::EDGE_TABLE[config], tables::EDGE_TABLE[255 - config]);

        let row = &tables::TRI_TABLE[config];
        let mut used = 0u16;
        let mut i = 0;
        while i < row.len() && row[i] != 255 {
            used |= 1 << row[i];
            i += 1;
        }
        assert_eq!(i % 3, 0, "config {config}: row length not a triangle multiple");
        assert_eq!(
            used, tables::EDGE_TABLE[config],
            "config {config}: triangle edges disagree with the edge table"
        );
        // Every listed edge really separates an inside corner from an
        // outside corner.
        for e in 0..12 {
            if used & (1 << e) != 0 {
                let (a, b) = tables::EDGE_CONNECTIONS[e];
                assert_ne!(config >> a & 1, config >> b & 1, "config {config} edge {e}");
            }
        }
    }
}

#[test]
fn plane_grid_face_and_edge_counts() {
    // Plane x = 2.5 on a 6x5x4 node grid: one crossing per x-edge column
    // (5 * 4 = 20 edges), but only edges with all four neighbor cells in
    // bounds produce faces: (5 - 2) * (4 - 2) = 6.
    let plane = AnalyticShape::Plane {
        normal: Vec3::x(),
        offset: 2.5,
    };
    let g = sample_analytic(&plane, [6, 5, 4], Vec3::zeros(), 1.0).unwrap();
    let edges = active_edges(&g);
    assert_eq!(edges.len(), 20);
    let (cells, quads) = dual_topology(&g);
    assert_eq!(quads.len(), 6);
    // Every cell in the crossing layer is referenced by some quad.
    assert_eq!(cells.len(), 4 * 3);
    assert!(quads.len() <= edges.len());
}

#[test]
fn single_boundary_face_node_yields_one_interior_quad() {
    // One negative node on the z = 0 boundary face: its four in-plane edges
    // have out-of-bounds neighbor cells, so only the inward z-edge makes a
    // face.
    let mut values = vec![1.0; 125];
    values[(2 * 5 + 2) * 5] = -1.0; // node (2, 2, 0)
    let g = SdfGrid::new([5, 5, 5], Vec3::zeros(), 1.0, values, true).unwrap();
    assert_eq!(active_edges(&g).len(), 5);
    let (cells, quads) = dual_topology(&g);
    assert_eq!(quads.len(), 1);
    assert_eq!(
        cells,
        vec![[1, 1, 0], [1, 2, 0], [2, 1, 0], [2, 2, 0]],
        "active cells sorted by linear cell index"
    );
    let quad = quads[0];
    assert_eq!(
        quad.edge,
        GridEdge {
            axis: Axis::Z,
            node: [2, 2, 0]
        }
    );
    // Cells wound (1,1), (2,1), (2,2), (1,2) in the xy cross-plane.
    assert_eq!(quad.corners, [0, 2, 3, 1]);

    // Inside is below (negative at z = 0), so the face must open upward.
    let dual = DualMesh {
        vertices: midpoint_vertices(&g, &cells),
        active_cells: cells,
        quads,
    };
    let tri = dual.triangulate();
    for t in 0..tri.triangles.len() {
        assert!(tri.face_normal_raw(t).z > 0.0);
    }
}

#[test]
fn sphere_dual_mesh_is_closed_and_outward() {
    let g = sphere_grid(16, 0.6);
    let dual = mesh_midpoint(&g).unwrap();
    // Surface well inside the grid: every active edge gets its quad.
    assert_eq!(dual.quads.len(), active_edges(&g).len());
    let tri = dual.triangulate();
    assert!(tri.is_watertight());
    for t in 0..tri.triangles.len() {
        let [a, b, c] = tri.triangle(t);
        let centroid = (a + b + c) / 3.0;
        assert!(
            tri.face_normal_raw(t).dot(&centroid) > 0.0,
            "face {t} winds inward"
        );
    }
}

#[test]
fn midpoint_vertices_sit_at_cell_centers() {
    let plane = AnalyticShape::Plane {
        normal: Vec3::x(),
        offset: 0.3,
    };
    let g = sample_analytic(&plane, [8, 8, 8], Vec3::repeat(-1.0), 0.25).unwrap();
    let dual = mesh_midpoint(&g).unwrap();
    for (cell, v) in dual.active_cells.iter().zip(&dual.vertices) {
        assert_eq!(*v, g.cell_center(*cell));
        // A cell center is never farther than half a cell from the surface
        // plane crossing its cell.
        assert!((v.x - 0.3).abs() <= 0.5 * g.spacing() + 1e-12);
    }
}

#[test]
fn qef_recovers_orthogonal_plane_intersection() {
    let corner = Vec3::new(0.2, -0.1, 0.4);
    let planes = vec![
        (Vec3::new(corner.x, 9.0, -3.0), Vec3::x()),
        (Vec3::new(-7.0, corner.y, 2.0), Vec3::y()),
        (Vec3::new(4.0, 5.0, corner.z), Vec3::z()),
    ];
    // Mass point at the intersection: recovered exactly.
    let x = solve_qef(&planes, corner, 1e-2);
    assert_relative_eq!(x, corner, epsilon = 1e-14);
    // Mass point elsewhere: the regularizer blends it in as
    // (corner + lambda m) / (1 + lambda), independently derived.
    let m = Vec3::new(1.0, 1.0, 1.0);
    let x = solve_qef(&planes, m, 0.5);
    let expect = (corner + 0.5 * m) / 1.5;
    assert_relative_eq!(x, expect, epsilon = 1e-12);
}

#[test]
fn qef_single_plane_matches_independent_solvers() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if n.norm() < 0.1 {
            continue;
        }
        let n = n.normalize();
        let p = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let m = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let lambda = 1e-2;
        let x = solve_qef(&[(p, n)], m, lambda);

        // Closed form: move from the mass point along the normal by the
        // regularizer-damped plane offset.
        let closed = m + (n.dot(&(p - m)) / (1.0 + lambda)) * n;
        assert_relative_eq!(x, closed, epsilon = 1e-9);

        // Cramer's rule on the dense 3x3 system, written independently.
        let a = n * n.transpose() + nalgebra::Matrix3::identity() * lambda;
        let b = n * n.dot(&p) + lambda * m;
        let det = |c0: Vec3, c1: Vec3, c2: Vec3| c0.dot(&c1.cross(&c2));
        let (c0, c1, c2) = (Vec3::from(a.column(0)), Vec3::from(a.column(1)), Vec3::from(a.column(2)));
        let d = det(c0, c1, c2);
        let cramer = Vec3::new(
            det(b, c1, c2) / d,
            det(c0, b, c2) / d,
            det(c0, c1, b) / d,
        );
        assert_relative_eq!(x, cramer, epsilon = 1e-9);
    }
}

#[test]
fn qef_vertices_on_planar_field_lie_on_plane_and_in_cell() {
    let n = Vec3::new(1.0, 2.0, 2.0) / 3.0;
    let plane = AnalyticShape::Plane {
        normal: n,
        offset: 0.1,
    };
    let g = sample_analytic(&plane, [8, 8, 8], Vec3::repeat(-1.0), 0.25).unwrap();
    let grads = estimate_gradients(&g);
    let dual = mesh_qef(&g, &grads, &QefConfig::default()).unwrap();
    for (cell, v) in dual.active_cells.iter().zip(&dual.vertices) {
        assert!(
            (n.dot(v) - 0.1).abs() <= 1e-9,
            "vertex {v:?} off the plane by {}",
            (n.dot(v) - 0.1).abs()
        );
        let min = g.cell_min(*cell);
        for i in 0..3 {
            assert!(v[i] >= min[i] - 1e-12 && v[i] <= min[i] + g.spacing() + 1e-12);
        }
    }
}

#[test]
fn marching_cubes_single_inside_corner() {
    let mut values = vec![1.0; 8];
    values[0] = -1.0;
    let g = SdfGrid::new([2, 2, 2], Vec3::zeros(), 1.0, values, true).unwrap();
    let mesh = marching_cubes(&g).unwrap();
    assert_eq!(mesh.vertices.len(), 3);
    assert_eq!(mesh.triangles.len(), 1);
    // Crossings at the midpoints of the three edges leaving the corner,
    // in active-edge order (x edge, then y, then z).
    assert_eq!(mesh.vertices[0], Vec3::new(0.5, 0.0, 0.0));
    assert_eq!(mesh.vertices[1], Vec3::new(0.0, 0.5, 0.0));
    assert_eq!(mesh.vertices[2], Vec3::new(0.0, 0.0, 0.5));
    // Outward means away from the inside corner at the origin.
    assert!(mesh.face_normal_raw(0).dot(&Vec3::new(1.0, 1.0, 1.0)) > 0.0);
}

#[test]
fn marching_cubes_sphere_accuracy_topology_orientation() {
    let g = sphere_grid(20, 0.6);
    let h = g.spacing();
    let mesh = marching_cubes(&g).unwrap();
    assert_eq!(mesh.vertices.len(), active_edges(&g).len());
    assert!(mesh.is_watertight());
    // Linear interpolation on a sphere SDF has curvature-bounded error.
    for v in &mesh.vertices {
        assert!(
            (v.norm() - 0.6).abs() <= 2.0 * h * h / 0.6,
            "vertex {v:?} misses the sphere by {}",
            (v.norm() - 0.6).abs()
        );
    }
    for t in 0..mesh.triangles.len() {
        let n = mesh.face_normal_raw(t);
        if n.norm() <= 1e-12 * h * h {
            continue; // ignore degenerate slivers
        }
        let [a, b, c] = mesh.triangle(t);
        assert!(n.dot(&((a + b + c) / 3.0)) > 0.0, "face {t} winds inward");
    }
}

#[test]
fn qef_sphere_vertices_track_the_surface() {
    let g = sphere_grid(16, 0.6);
    let grads = estimate_gradients(&g);
    let dual = mesh_qef(&g, &grads, &QefConfig::default()).unwrap();
    for v in &dual.vertices {
        assert!((v.norm() - 0.6).abs() <= g.spacing());
    }
    assert!(dual.triangulate().is_watertight());
}

#[test]
fn constant_sign_grids_produce_no_mesh() {
    let g = SdfGrid::from_fn([4, 4, 4], Vec3::zeros(), 1.0, true, |_| 1.0).unwrap();
    assert!(matches!(mesh_midpoint(&g), Err(Error::EmptyMesh(_))));
    assert!(matches!(marching_cubes(&g), Err(Error::EmptyMesh(_))));
}

#[test]
fn extraction_is_deterministic() {
    let g = sphere_grid(14, 0.55);
    assert_eq!(mesh_midpoint(&g).unwrap(), mesh_midpoint(&g).unwrap());
    let a = marching_cubes(&g).unwrap();
    let b = marching_cubes(&g).unwrap();
    assert_eq!(a.vertices, b.vertices);
    assert_eq!(a.triangles, b.triangles);

    let grads = estimate_gradients(&g);
    let qa = mesh_qef(&g, &grads, &QefConfig::default()).unwrap();
    let qb = mesh_qef(&g, &grads, &QefConfig::default()).unwrap();
    assert_eq!(qa, qb);
}

#[test]
fn triangulation_preserves_vertices_and_doubles_quads() {
    let g = sphere_grid(12, 0.5);
    let dual = mesh_midpoint(&g).unwrap();
    let tri = dual.triangulate();
    assert_eq!(tri.vertices, dual.vertices);
    assert_eq!(tri.triangles.len(), 2 * dual.quads.len());
}
