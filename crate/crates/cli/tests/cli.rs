//! End-to-end tests that drive the compiled binary the way a user would:
//! every command runs as a subprocess inside a temporary directory, and the
//! assertions only look at exit codes, stdout, and the files left behind.

use sdfmesh::geom::{self, TriMesh};
use sdfmesh::grid::{self, SdfGrid};
use sdfmesh::metrics;
use sdfmesh::Vec3;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdfmesh"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to spawn the binary")
}

/// Run a command that must succeed; returns its stdout.
fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("stdout is not UTF-8")
}

/// Run a command that must fail; returns its exit code.
fn fails(dir: &Path, args: &[&str]) -> i32 {
    let out = run(dir, args);
    assert!(
        !out.status.success(),
        "command {args:?} unexpectedly succeeded"
    );
    out.status.code().expect("process was killed by a signal")
}

fn bytes(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

fn text(dir: &Path, name: &str) -> String {
    String::from_utf8(bytes(dir, name)).expect("file is not UTF-8")
}

/// Axis-aligned cube with half-extent `h`, outward orientation.
fn write_cube_obj(dir: &Path, h: f64, name: &str) -> PathBuf {
    let v = |x: f64, y: f64, z: f64| Vec3::new(x * h, y * h, z * h);
    let vertices = vec![
        v(-1.0, -1.0, -1.0),
        v(1.0, -1.0, -1.0),
        v(1.0, 1.0, -1.0),
        v(-1.0, 1.0, -1.0),
        v(-1.0, -1.0, 1.0),
        v(1.0, -1.0, 1.0),
        v(1.0, 1.0, 1.0),
        v(-1.0, 1.0, 1.0),
    ];
    let triangles = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [2, 3, 7],
        [2, 7, 6],
        [0, 4, 7],
        [0, 7, 3],
        [1, 2, 6],
        [1, 6, 5],
    ];
    let mesh = TriMesh::new(vertices, triangles).unwrap();
    let path = dir.join(name);
    geom::write_obj(&mesh, &path).unwrap();
    path
}

#[test]
fn gen_sdf_samples_the_builtin_sphere_exactly() {
    let dir = TempDir::new().unwrap();
    // Odd dims put a node at the domain center, where the sphere SDF is
    // exactly -radius = -(0.3 * extent).
    ok(
        dir.path(),
        &["gen-sdf", "--shape", "sphere", "--dims", "17", "-o", "s.sdfg"],
    );
    let grid = grid::read_grid(dir.path().join("s.sdfg")).unwrap();
    assert!(grid.is_signed());
    assert_eq!(grid.dims(), [17; 3]);
    // The grid file stores values in single precision.
    let center = grid.value([8, 8, 8]);
    assert!(
        (center - (-0.6)).abs() < 1e-6,
        "center node should be -0.6, got {center}"
    );
}

#[test]
fn gen_sdf_reruns_are_byte_identical_and_noise_is_seeded() {
    let dir = TempDir::new().unwrap();
    let base = ["gen-sdf", "--shape", "torus", "--dims", "12"];
    ok(dir.path(), &[&base[..], &["-o", "clean_a.sdfg"]].concat());
    ok(dir.path(), &[&base[..], &["-o", "clean_b.sdfg"]].concat());
    assert_eq!(
        bytes(dir.path(), "clean_a.sdfg"),
        bytes(dir.path(), "clean_b.sdfg"),
        "repeated runs must write identical grids"
    );

    let noisy = |seed: &str, out: &str| {
        ok(
            dir.path(),
            &[&base[..], &["--noise-seed", seed, "-o", out]].concat(),
        );
    };
    noisy("42", "n42_a.sdfg");
    noisy("42", "n42_b.sdfg");
    noisy("43", "n43.sdfg");
    assert_eq!(
        bytes(dir.path(), "n42_a.sdfg"),
        bytes(dir.path(), "n42_b.sdfg"),
        "the same noise seed must reproduce the grid bit for bit"
    );
    assert_ne!(
        bytes(dir.path(), "n42_a.sdfg"),
        bytes(dir.path(), "n43.sdfg"),
        "different seeds must perturb the grid differently"
    );
    assert_ne!(
        bytes(dir.path(), "n42_a.sdfg"),
        bytes(dir.path(), "clean_a.sdfg"),
        "noise must actually change the grid"
    );
}

#[test]
fn gen_sdf_rejects_conflicting_or_missing_inputs() {
    let dir = TempDir::new().unwrap();
    write_cube_obj(dir.path(), 1.0, "cube.obj");
    assert_eq!(
        fails(
            dir.path(),
            &[
                "gen-sdf", "--shape", "sphere", "--mesh", "cube.obj", "-o", "x.sdfg"
            ],
        ),
        2,
        "--shape and --mesh together must be a usage error"
    );
    assert_eq!(
        fails(dir.path(), &["gen-sdf", "-o", "x.sdfg"]),
        2,
        "one of --shape/--mesh is required"
    );
    assert_eq!(
        fails(
            dir.path(),
            &["gen-sdf", "--mesh", "missing.obj", "-o", "x.sdfg"],
        ),
        3,
        "an unreadable mesh must exit with the file-error code"
    );
}

#[test]
fn mesh_inputs_are_normalized_and_extraction_round_trips() {
    let dir = TempDir::new().unwrap();
    // A cube with half-extent 3: gen-sdf rescales it isotropically to the
    // unit sphere, so the sampled solid is a cube with half-extent 1/sqrt(3).
    write_cube_obj(dir.path(), 3.0, "cube.obj");
    ok(
        dir.path(),
        &[
            "gen-sdf", "--mesh", "cube.obj", "--dims", "32", "-o", "cube.sdfg",
        ],
    );
    let grid = grid::read_grid(dir.path().join("cube.sdfg")).unwrap();
    assert!(grid.is_signed(), "a watertight input must give a signed grid");

    ok(
        dir.path(),
        &["mesh", "--in", "cube.sdfg", "--method", "mc", "-o", "cube_mc.obj"],
    );
    let extracted = geom::read_obj(dir.path().join("cube_mc.obj")).unwrap();
    assert!(extracted.is_watertight(), "marching cubes must close the surface");

    let reference = {
        let h = 1.0 / 3.0_f64.sqrt();
        let path = write_cube_obj(dir.path(), h, "cube_ref.obj");
        geom::read_obj(path).unwrap()
    };
    let take = |m: &TriMesh| -> Vec<Vec3> {
        geom::sample_surface(m, 20_000, 7)
            .unwrap()
            .into_iter()
            .map(|s| s.position)
            .collect()
    };
    let cd = metrics::chamfer(&take(&extracted), &take(&reference)).unwrap();
    let h = grid.spacing();
    assert!(
        cd < h,
        "chamfer distance {cd} should be below one cell ({h})"
    );
}

#[test]
fn mesh_sdc_writes_a_monotone_trace_and_a_manifest() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &["gen-sdf", "--shape", "plane", "--dims", "16", "-o", "p.sdfg"],
    );
    ok(
        dir.path(),
        &["mesh", "--in", "p.sdfg", "--method", "sdc", "-o", "p_sdc.obj"],
    );

    let trace = text(dir.path(), "p_sdc.trace.tsv");
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iteration\tloss"));
    let losses: Vec<f64> = lines
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(!losses.is_empty());
    assert!(
        losses.windows(2).all(|w| w[1] <= w[0]),
        "the recorded loss must never increase"
    );

    let manifest: serde_json::Value =
        serde_json::from_str(&text(dir.path(), "p_sdc.manifest.json")).unwrap();
    assert_eq!(manifest["tool"], "sdfmesh");
    assert_eq!(manifest["command"], "mesh");
    assert!(manifest["unix_time_s"].is_u64());
    assert!(
        manifest["config"]["alpha1"].is_number(),
        "the manifest must echo the run configuration"
    );
}

#[test]
fn mesh_sdc_places_plane_vertices_on_the_plane() {
    let dir = TempDir::new().unwrap();
    // Built-in plane at the default bounds: x = 0.1 on a 16^3 grid.
    ok(
        dir.path(),
        &["gen-sdf", "--shape", "plane", "--dims", "16", "-o", "p.sdfg"],
    );
    ok(
        dir.path(),
        &[
            "mesh", "--in", "p.sdfg", "--method", "sdc", "--alpha1", "0.3", "--iters", "3000",
            "--lr", "1e-3", "--beta1", "0.95", "--beta2", "0.99", "--window", "100", "--tol",
            "1e-12", "-o", "p_sdc.obj",
        ],
    );
    let mesh = geom::read_obj(dir.path().join("p_sdc.obj")).unwrap();
    let h = 2.0 / 15.0;
    let worst = mesh
        .vertices
        .iter()
        .map(|v| (v.x - 0.1).abs())
        .fold(0.0, f64::max);
    assert!(
        worst <= 1e-3 * h,
        "worst plane deviation {:.3e} exceeds 1e-3*h = {:.3e}",
        worst,
        1e-3 * h
    );
}

#[test]
fn mesh_rejects_a_grid_without_a_surface() {
    let dir = TempDir::new().unwrap();
    let grid = SdfGrid::new(
        [8; 3],
        Vec3::new(-1.0, -1.0, -1.0),
        2.0 / 7.0,
        vec![1.0; 512],
        true,
    )
    .unwrap();
    grid::write_grid(&grid, dir.path().join("flat.sdfg")).unwrap();
    for method in ["mc", "dc", "midpoint", "sdc"] {
        assert_eq!(
            fails(
                dir.path(),
                &["mesh", "--in", "flat.sdfg", "--method", method, "-o", "x.obj"],
            ),
            4,
            "a constant-sign grid must exit with the empty-output code ({method})"
        );
    }
}

#[test]
fn eval_of_a_mesh_against_itself_is_exact() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &["gen-sdf", "--shape", "sphere", "--dims", "24", "-o", "s.sdfg"],
    );
    ok(
        dir.path(),
        &["mesh", "--in", "s.sdfg", "--method", "mc", "-o", "s_mc.obj"],
    );
    let stdout = ok(
        dir.path(),
        &[
            "eval", "--pred", "s_mc.obj", "--gt", "s_mc.obj", "--samples", "20000", "-o", "self",
        ],
    );
    let report = text(dir.path(), "self.txt");
    assert_eq!(stdout, report, "stdout must mirror the written report");
    for line in ["cd: 0.000000", "nc: 100.000000", "si: 0.000000", "lsd_a: 0.000000"] {
        assert!(
            report.lines().any(|l| l == line),
            "expected line {line:?} in report:\n{report}"
        );
    }
}

#[test]
fn eval_reports_are_reproducible_and_consistently_scaled() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &["gen-sdf", "--shape", "box", "--dims", "24", "-o", "b.sdfg"],
    );
    ok(
        dir.path(),
        &["mesh", "--in", "b.sdfg", "--method", "mc", "-o", "b_mc.obj"],
    );
    ok(
        dir.path(),
        &["mesh", "--in", "b.sdfg", "--method", "midpoint", "-o", "b_mid.obj"],
    );
    let eval = |out: &str| {
        ok(
            dir.path(),
            &[
                "eval", "--pred", "b_mid.obj", "--gt", "b_mc.obj", "--gt-sdf", "b.sdfg",
                "--samples", "20000", "--seed", "5", "-o", out,
            ],
        );
    };
    eval("r1");
    eval("r2");
    assert_eq!(bytes(dir.path(), "r1.txt"), bytes(dir.path(), "r2.txt"));
    assert_eq!(bytes(dir.path(), "r1.tsv"), bytes(dir.path(), "r2.tsv"));

    let tsv = text(dir.path(), "r1.tsv");
    let mut rows = 0;
    for line in tsv.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 4, "bad row {line:?}");
        let (name, raw, scaled) = (
            cols[0],
            cols[1].parse::<f64>().unwrap(),
            cols[2].parse::<f64>().unwrap(),
        );
        assert_eq!(cols[3], "5", "seed column must echo --seed");
        let scale = match name {
            "cd" | "ecd" | "lsd_p" | "lsd_a" => 1e3,
            "nc" | "si" | "iou" => 1.0,
            other => panic!("unexpected metric {other}"),
        };
        let want = raw * scale;
        assert!(
            (scaled - want).abs() <= 1e-12 * want.abs().max(1.0),
            "{name}: scaled {scaled} != raw {raw} * {scale}"
        );
        rows += 1;
    }
    // cd, nc, ecd, si, iou, lsd_p, lsd_a — the grid is signed and both
    // meshes are watertight, so nothing is skipped.
    assert_eq!(rows, 7, "expected all metrics present:\n{tsv}");
}

#[test]
fn eval_against_a_distinct_mesh_reports_nonzero_error() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &["gen-sdf", "--shape", "sphere", "--dims", "20", "-o", "s.sdfg"],
    );
    ok(
        dir.path(),
        &["mesh", "--in", "s.sdfg", "--method", "mc", "-o", "mc.obj"],
    );
    ok(
        dir.path(),
        &["mesh", "--in", "s.sdfg", "--method", "midpoint", "-o", "mid.obj"],
    );
    ok(
        dir.path(),
        &[
            "eval", "--pred", "mid.obj", "--gt", "mc.obj", "--samples", "10000", "-o", "d",
        ],
    );
    let report = text(dir.path(), "d.txt");
    let cd: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("cd: "))
        .expect("report must contain a cd line")
        .parse()
        .unwrap();
    assert!(cd > 0.0, "distinct meshes must score a positive distance");
}

#[test]
fn fit_din_zero_weight_regularizer_matches_disabled() {
    let dir = TempDir::new().unwrap();
    let common = [
        "fit-din",
        "--shapes",
        "sphere",
        "--steps",
        "40",
        "--samples-per-shape",
        "64",
        "--reg-dims",
        "8",
    ];
    ok(
        dir.path(),
        &[&common[..], &["--sdr", "--alpha2", "0", "-o", "a.dinc"]].concat(),
    );
    ok(dir.path(), &[&common[..], &["-o", "b.dinc"]].concat());
    assert_eq!(
        bytes(dir.path(), "a.trace.tsv"),
        bytes(dir.path(), "b.trace.tsv"),
        "a zero-weight regularizer must not change the loss trace"
    );
    assert_eq!(
        bytes(dir.path(), "a.dinc"),
        bytes(dir.path(), "b.dinc"),
        "a zero-weight regularizer must not change the trained network"
    );
}

#[test]
fn fit_din_trains_reconstructs_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let args = [
        "fit-din",
        "--shapes",
        "sphere",
        "--steps",
        "150",
        "--samples-per-shape",
        "128",
        "--reg-dims",
        "12",
        "--sdr",
        "--reconstruct",
        "--dims",
        "20",
    ];
    ok(dir.path(), &[&args[..], &["-o", "fit.dinc"]].concat());

    let trace = text(dir.path(), "fit.trace.tsv");
    assert_eq!(
        trace.lines().count(),
        1 + 150,
        "one header plus one row per training step"
    );

    let mesh = geom::read_obj(dir.path().join("fit.sphere.obj")).unwrap();
    assert!(!mesh.is_empty());
    for v in &mesh.vertices {
        assert!(
            v.iter().all(|c| c.abs() <= 1.0),
            "reconstructed vertex {v:?} left the domain box"
        );
    }

    ok(dir.path(), &[&args[..], &["-o", "rerun.dinc"]].concat());
    assert_eq!(
        bytes(dir.path(), "fit.dinc"),
        bytes(dir.path(), "rerun.dinc"),
        "training must be deterministic under a fixed seed"
    );
    assert_eq!(
        bytes(dir.path(), "fit.sphere.obj"),
        bytes(dir.path(), "rerun.sphere.obj"),
        "reconstruction must be deterministic under a fixed seed"
    );
}

#[test]
fn fit_din_rejects_duplicate_shapes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        fails(
            dir.path(),
            &["fit-din", "--shapes", "sphere,sphere", "-o", "x.dinc"],
        ),
        2,
        "listing a shape twice must be a usage error"
    );
}

#[test]
fn every_command_rerun_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let pairs: [&[&str]; 2] = [
        &["gen-sdf", "--shape", "box", "--dims", "14", "--noise-seed", "9"],
        &["gen-sdf", "--shape", "box", "--dims", "14"],
    ];
    for (i, base) in pairs.iter().enumerate() {
        let (a, b) = (format!("g{i}_a.sdfg"), format!("g{i}_b.sdfg"));
        ok(dir.path(), &[base, &["-o", &a][..]].concat());
        ok(dir.path(), &[base, &["-o", &b][..]].concat());
        assert_eq!(bytes(dir.path(), &a), bytes(dir.path(), &b));
    }

    ok(
        dir.path(),
        &["gen-sdf", "--shape", "sphere", "--dims", "14", "-o", "s.sdfg"],
    );
    for method in ["mc", "dc", "midpoint", "sdc"] {
        let (a, b) = (format!("{method}_a.obj"), format!("{method}_b.obj"));
        ok(
            dir.path(),
            &["mesh", "--in", "s.sdfg", "--method", method, "-o", &a],
        );
        ok(
            dir.path(),
            &["mesh", "--in", "s.sdfg", "--method", method, "-o", &b],
        );
        assert_eq!(
            bytes(dir.path(), &a),
            bytes(dir.path(), &b),
            "{method} rerun must write identical output"
        );
    }
}
