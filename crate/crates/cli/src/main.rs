//! Batch front end for the sdfmesh toolkit.
//!
//! Four subcommands cover the pipeline end to end: `gen-sdf` produces a
//! signed-distance grid from a built-in shape or an OBJ mesh, `mesh` extracts
//! a triangle mesh from a grid with a selectable method, `eval` scores a
//! predicted mesh against a reference, and `fit-din` trains the implicit
//! network on built-in shapes and optionally reconstructs them.
//!
//! Every run writes a `<stem>.manifest.json` next to its primary output,
//! echoing the resolved configuration and tool version. All outputs are a
//! pure function of (inputs, flags, seed) — re-running a command reproduces
//! them bit-exactly, except the manifest's timestamp field.
//!
//! Exit codes: 0 success, 2 usage/parameter error, 3 data or file-format
//! error, 4 numerical failure or empty surface.

// Validation guards are written `!(x > 0.0)` on purpose: unlike `x <= 0.0`,
// the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use clap::{Args, Parser, Subcommand, ValueEnum};
use sdfmesh::contour::{marching_cubes, mesh_midpoint, mesh_qef, QefConfig};
use sdfmesh::din::{self, DinTrainConfig, SdfSampleSet};
use sdfmesh::field::estimate_gradients;
use sdfmesh::geom::{self, TriMesh};
use sdfmesh::grid::{self, AnalyticShape};
use sdfmesh::metrics::{self, DistanceSource, MetricsReport, NcMode};
use sdfmesh::sdc::{mesh_sdc, SdcConfig};
use sdfmesh::{Error, Vec3};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Parser)]
#[command(name = "sdfmesh", version, about = "Signed-distance grids to meshes and back")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a signed-distance grid from a built-in shape or an OBJ mesh.
    GenSdf(GenSdfArgs),
    /// Extract a triangle mesh from a signed-distance grid.
    Mesh(MeshArgs),
    /// Score a predicted mesh against a reference mesh (and optionally a
    /// reference grid).
    Eval(EvalArgs),
    /// Train the implicit network on built-in shapes.
    FitDin(FitDinArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenSdf(args) => cmd_gen_sdf(args),
        Command::Mesh(args) => cmd_mesh(args),
        Command::Eval(args) => cmd_eval(args),
        Command::FitDin(args) => cmd_fit_din(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidParameter(_) | Error::Precondition(_) | Error::DimensionMismatch(_) => 2,
        Error::Format { .. } | Error::MalformedObj { .. } | Error::Io(_) => 3,
        Error::EmptyMesh(_) | Error::Numerical(_) => 4,
    }
}

// ---------------------------------------------------------------------------
// Shared pieces

/// Built-in analytic shapes, sized relative to the domain box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ShapeName {
    Sphere,
    Box,
    Torus,
    Plane,
}

impl ShapeName {
    fn label(self) -> &'static str {
        match self {
            ShapeName::Sphere => "sphere",
            ShapeName::Box => "box",
            ShapeName::Torus => "torus",
            ShapeName::Plane => "plane",
        }
    }
}

/// Canonical instance of each built-in shape, centered in the domain box
/// `[lo, hi]^3` and sized by its extent so any bounds give a well-resolved
/// surface.
fn builtin_shape(name: ShapeName, lo: f64, hi: f64) -> AnalyticShape {
    let center = Vec3::repeat(0.5 * (lo + hi));
    let extent = hi - lo;
    match name {
        ShapeName::Sphere => AnalyticShape::Sphere {
            center,
            radius: 0.3 * extent,
        },
        ShapeName::Box => AnalyticShape::Box {
            center,
            half_extents: Vec3::new(0.25, 0.2, 0.3) * extent,
        },
        ShapeName::Torus => AnalyticShape::Torus {
            center,
            major_radius: 0.25 * extent,
            minor_radius: 0.1 * extent,
        },
        ShapeName::Plane => {
            // Axis-aligned and slightly off-center, so the plane never passes
            // exactly through grid nodes at the default bounds.
            let normal = Vec3::new(1.0, 0.0, 0.0);
            AnalyticShape::Plane {
                normal,
                offset: normal.dot(&center) + 0.05 * extent,
            }
        }
    }
}

#[derive(Args, Serialize)]
struct BoundsArg {
    /// Domain interval applied to each axis.
    #[arg(
        long,
        num_args = 2,
        value_names = ["LO", "HI"],
        allow_negative_numbers = true,
        default_values_t = [-1.0, 1.0]
    )]
    bounds: Vec<f64>,
}

impl BoundsArg {
    fn parse(&self) -> Result<(f64, f64), Error> {
        let (lo, hi) = (self.bounds[0], self.bounds[1]);
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bounds must be finite with LO < HI, got {lo} {hi}"
            )));
        }
        Ok((lo, hi))
    }
}

fn cubic_dims(n: usize) -> Result<[usize; 3], Error> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "dims must be at least 2 nodes per axis, got {n}"
        )));
    }
    Ok([n; 3])
}

/// `"out/model.dinc"` with suffix `".trace.tsv"` becomes
/// `"out/model.trace.tsv"`: the suffix replaces everything after the stem.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    /// Wall-clock seconds since the Unix epoch; the one field exempt from
    /// the bit-exact reproducibility contract.
    unix_time_s: u64,
    config: &'a T,
}

fn write_manifest<T: Serialize>(out: &Path, command: &str, config: &T) -> Result<(), Error> {
    let manifest = Manifest {
        tool: "sdfmesh",
        version: env!("CARGO_PKG_VERSION"),
        command,
        unix_time_s: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .expect("flag structs contain only serializable primitives");
    std::fs::write(with_suffix(out, ".manifest.json"), json + "\n")?;
    Ok(())
}

fn write_trace(path: &Path, trace: &[f64], comment: Option<&str>) -> Result<(), Error> {
    let mut text = String::new();
    if let Some(comment) = comment {
        text.push_str(&format!("# {comment}\n"));
    }
    text.push_str("iteration\tloss\n");
    for (i, loss) in trace.iter().enumerate() {
        text.push_str(&format!("{i}\t{loss:e}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-sdf

#[derive(Args, Serialize)]
struct GenSdfArgs {
    /// Built-in analytic shape to sample.
    #[arg(long, value_enum, conflicts_with = "mesh", required_unless_present = "mesh")]
    shape: Option<ShapeName>,
    /// OBJ mesh to sample; rescaled isotropically about its bounding-box
    /// center to fit the unit sphere before sampling.
    #[arg(long, value_name = "OBJ")]
    mesh: Option<PathBuf>,
    /// Nodes per axis (the grid is cubic).
    #[arg(long, default_value_t = 64)]
    dims: usize,
    #[command(flatten)]
    #[serde(flatten)]
    bounds: BoundsArg,
    /// Add Gaussian noise (sigma = spacing / 3) to every node, seeded here.
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Output grid file.
    #[arg(short, long, value_name = "SDFG")]
    output: PathBuf,
}

/// Isotropically rescale about the bounding-box center so every vertex lies
/// within the unit sphere.
fn normalize_to_unit_sphere(mesh: &mut TriMesh) -> Result<(), Error> {
    let first = *mesh
        .vertices
        .first()
        .ok_or_else(|| Error::EmptyMesh("cannot normalize an empty mesh".into()))?;
    let (mut lo, mut hi) = (first, first);
    for v in &mesh.vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let center = (lo + hi) * 0.5;
    let radius = mesh
        .vertices
        .iter()
        .map(|v| (v - center).norm())
        .fold(0.0, f64::max);
    if !(radius > 0.0) {
        return Err(Error::Precondition(
            "mesh has zero spatial extent; cannot normalize".into(),
        ));
    }
    for v in &mut mesh.vertices {
        *v = (*v - center) / radius;
    }
    Ok(())
}

fn cmd_gen_sdf(args: &GenSdfArgs) -> Result<(), Error> {
    let (lo, hi) = args.bounds.parse()?;
    let dims = cubic_dims(args.dims)?;
    let spacing = (hi - lo) / (args.dims - 1) as f64;
    let origin = Vec3::repeat(lo);
    let mut sdf = if let Some(name) = args.shape {
        grid::sample_analytic(&builtin_shape(name, lo, hi), dims, origin, spacing)?
    } else {
        let path = args.mesh.as_ref().expect("clap enforces shape xor mesh");
        let mut mesh = geom::read_obj(path)?;
        normalize_to_unit_sphere(&mut mesh)?;
        grid::sdf_from_mesh(&mesh, dims, origin, spacing)?
    };
    if let Some(seed) = args.noise_seed {
        sdf = grid::add_noise(&sdf, seed);
    }
    grid::write_grid(&sdf, &args.output)?;
    write_manifest(&args.output, "gen-sdf", args)?;
    println!(
        "wrote {} ({}^3 nodes, spacing {spacing:.6}, {})",
        args.output.display(),
        args.dims,
        if sdf.is_signed() { "signed" } else { "unsigned" },
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// mesh

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Method {
    /// Marching cubes.
    Mc,
    /// Dual contouring with QEF vertex placement.
    Dc,
    /// Dual contouring with cell-center vertices.
    Midpoint,
    /// Dual contouring with self-supervised vertex optimization.
    Sdc,
}

#[derive(Args, Serialize)]
struct MeshArgs {
    /// Input signed-distance grid.
    #[arg(long = "in", value_name = "SDFG")]
    input: PathBuf,
    /// Extraction method.
    #[arg(long, value_enum)]
    method: Method,
    /// Weight of the normal-alignment loss (sdc only).
    #[arg(long, default_value_t = 0.01)]
    alpha1: f64,
    /// Iteration cap for the vertex optimization (sdc only).
    #[arg(long, default_value_t = 500)]
    iters: usize,
    /// Shell half-width in cells supervising the distance loss (sdc only).
    #[arg(long, default_value_t = 2.0)]
    tau: f64,
    /// Optimizer step size (sdc only).
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    /// Optimizer first-moment decay (sdc only).
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    /// Optimizer second-moment decay (sdc only).
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    /// Convergence window in iterations (sdc only).
    #[arg(long, default_value_t = 20)]
    window: usize,
    /// Relative best-loss improvement below which the window stops the run
    /// (sdc only).
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Clamp QEF solutions into their cells (dc only).
    #[arg(long)]
    clamp: bool,
    /// Output OBJ file; sdc also writes `<stem>.trace.tsv` alongside.
    #[arg(short, long, value_name = "OBJ")]
    output: PathBuf,
}

fn cmd_mesh(args: &MeshArgs) -> Result<(), Error> {
    let grid = grid::read_grid(&args.input)?;
    let mesh = match args.method {
        Method::Mc => marching_cubes(&grid)?,
        Method::Midpoint => mesh_midpoint(&grid)?.triangulate(),
        Method::Dc => {
            let gradients = estimate_gradients(&grid);
            let config = QefConfig {
                clamp: args.clamp,
                ..QefConfig::default()
            };
            mesh_qef(&grid, &gradients, &config)?.triangulate()
        }
        Method::Sdc => {
            let config = SdcConfig {
                alpha_normal: args.alpha1,
                max_iters: args.iters,
                tau: args.tau,
                learning_rate: args.lr,
                beta1: args.beta1,
                beta2: args.beta2,
                convergence_window: args.window,
                convergence_tolerance: args.tol,
                ..SdcConfig::default()
            };
            let result = mesh_sdc(&grid, &config)?;
            write_trace(&with_suffix(&args.output, ".trace.tsv"), &result.trace, None)?;
            result.mesh.triangulate()
        }
    };
    geom::write_obj(&mesh, &args.output)?;
    write_manifest(&args.output, "mesh", args)?;
    println!(
        "wrote {} ({} vertices, {} triangles)",
        args.output.display(),
        mesh.vertices.len(),
        mesh.triangles.len(),
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args, Serialize)]
struct EvalArgs {
    /// Predicted mesh (OBJ).
    #[arg(long, value_name = "OBJ")]
    pred: PathBuf,
    /// Reference mesh (OBJ).
    #[arg(long, value_name = "OBJ")]
    gt: PathBuf,
    /// Reference signed-distance grid; enables IoU and the node-shell
    /// surface discrepancy.
    #[arg(long, value_name = "SDFG")]
    gt_sdf: Option<PathBuf>,
    /// Surface samples per mesh for the sampled metrics.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Seed for all sampled metrics.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shell half-width in cells for the node-shell discrepancy.
    #[arg(long, default_value_t = 2.0)]
    tau: f64,
    /// Dihedral angle (degrees) above which an edge counts as sharp.
    #[arg(long, default_value_t = 30.0)]
    sharp_angle: f64,
    /// Report base path; writes `<stem>.txt` and `<stem>.tsv`.
    #[arg(short, long, value_name = "BASE")]
    output: PathBuf,
}

fn sample_positions(mesh: &TriMesh, count: usize, seed: u64) -> Result<Vec<Vec3>, Error> {
    Ok(geom::sample_surface(mesh, count, seed)?
        .into_iter()
        .map(|s| s.position)
        .collect())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Error> {
    let pred = geom::read_obj(&args.pred)?;
    let gt = geom::read_obj(&args.gt)?;
    let mut notes = Vec::new();

    // Both meshes sample under the same seed so comparing a mesh against
    // itself yields identical point sets (and an exact zero distance).
    let pred_points = sample_positions(&pred, args.samples, args.seed)?;
    let gt_points = sample_positions(&gt, args.samples, args.seed)?;
    let cd = metrics::chamfer(&pred_points, &gt_points)?;
    let nc = metrics::normal_consistency(&pred, &gt, args.samples, args.seed, NcMode::Absolute)?;
    let ec = metrics::edge_chamfer(&pred, &gt, args.sharp_angle, args.samples)?;
    if ec.fallback_a {
        notes.push("prediction has no sharp edges; its edge samples fell back to the full surface".into());
    }
    if ec.fallback_b {
        notes.push("reference has no sharp edges; its edge samples fell back to the full surface".into());
    }
    let si = metrics::self_intersections(&pred);
    let lsd_a = metrics::lsd_a(&gt, &pred, args.samples, args.seed)?;

    let (iou, lsd_p) = match &args.gt_sdf {
        Some(path) => {
            let gt_grid = grid::read_grid(path)?;
            let shell = grid::near_surface_nodes(&gt_grid, args.tau);
            let lsd_p = metrics::lsd_p(&DistanceSource::GridValues, &pred, &gt_grid, &shell)?;
            let iou = if !gt_grid.is_signed() {
                notes.push("reference grid is unsigned; IoU skipped".into());
                None
            } else {
                let pred_grid =
                    grid::sdf_from_mesh(&pred, gt_grid.dims(), gt_grid.origin(), gt_grid.spacing())?;
                if pred_grid.is_signed() {
                    Some(metrics::iou3d(&pred_grid, &gt_grid)?)
                } else {
                    notes.push("prediction is not watertight; IoU skipped".into());
                    None
                }
            };
            (iou, Some(lsd_p))
        }
        None => (None, None),
    };

    let report = MetricsReport {
        cd: Some(cd),
        nc: Some(nc),
        ecd: Some(ec.value),
        si: Some(si as f64),
        iou,
        lsd_p,
        lsd_a: Some(lsd_a),
        n_samples: args.samples,
        seed: args.seed,
        notes,
    };
    std::fs::write(with_suffix(&args.output, ".txt"), report.to_text())?;
    std::fs::write(with_suffix(&args.output, ".tsv"), report.to_tsv())?;
    write_manifest(&args.output, "eval", args)?;
    print!("{}", report.to_text());
    Ok(())
}

// ---------------------------------------------------------------------------
// fit-din

#[derive(Args, Serialize)]
struct FitDinArgs {
    /// Comma-separated built-in shapes to fit jointly.
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    shapes: Vec<ShapeName>,
    /// Training steps.
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    /// Enable the mesh-consistency regularizer.
    #[arg(long)]
    sdr: bool,
    /// Weight of the mesh-consistency regularizer.
    #[arg(long, default_value_t = 0.01)]
    alpha2: f64,
    /// Seed for sampling, initialization, and training.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ground-truth SDF samples drawn per shape.
    #[arg(long, default_value_t = 512)]
    samples_per_shape: usize,
    /// Nodes per axis of the regularizer grid. The regularizer's per-step
    /// cost scales with this shell's node count, so the front end defaults
    /// to a coarser grid than the library.
    #[arg(long, default_value_t = 16)]
    reg_dims: usize,
    /// Per-step multiplicative learning-rate decay (1 = constant rate).
    #[arg(long, default_value_t = 1.0)]
    lr_decay: f64,
    #[command(flatten)]
    #[serde(flatten)]
    bounds: BoundsArg,
    /// Extract each shape's surface from the trained network afterwards,
    /// writing `<stem>.<shape>.obj` per shape.
    #[arg(long)]
    reconstruct: bool,
    /// Nodes per axis for the reconstruction grid.
    #[arg(long, default_value_t = 64)]
    dims: usize,
    /// Checkpoint path; the loss trace goes to `<stem>.trace.tsv`.
    #[arg(short, long, value_name = "DINC")]
    output: PathBuf,
}

fn cmd_fit_din(args: &FitDinArgs) -> Result<(), Error> {
    let (lo, hi) = args.bounds.parse()?;
    for (i, a) in args.shapes.iter().enumerate() {
        if args.shapes[..i].contains(a) {
            return Err(Error::InvalidParameter(format!(
                "shape '{}' listed twice; each shape owns one latent code",
                a.label()
            )));
        }
    }
    let shapes: Vec<AnalyticShape> = args
        .shapes
        .iter()
        .map(|&name| builtin_shape(name, lo, hi))
        .collect();
    let samples = SdfSampleSet::from_analytic(
        &shapes,
        args.samples_per_shape,
        Vec3::repeat(lo),
        Vec3::repeat(hi),
        args.seed,
    )?;
    let reg_dims = cubic_dims(args.reg_dims)?;
    let config = DinTrainConfig {
        steps: args.steps,
        alpha_sdr: args.alpha2,
        seed: args.seed,
        lr_decay: args.lr_decay,
        reg_dims,
        reg_origin: Vec3::repeat(lo),
        reg_spacing: (hi - lo) / (args.reg_dims - 1) as f64,
        ..DinTrainConfig::default()
    };

    let trace_path = with_suffix(&args.output, ".trace.tsv");
    let result = match din::train_din(&samples, &config, args.sdr) {
        Ok(result) => result,
        Err(err @ Error::Numerical(_)) => {
            // Leave a trace file behind so the aborted run is inspectable.
            write_trace(&trace_path, &[], Some(&format!("aborted: {err}")))?;
            return Err(err);
        }
        Err(err) => return Err(err),
    };
    din::write_checkpoint(&args.output, &result.net, &result.latents)?;
    write_trace(&trace_path, &result.trace, None)?;

    if args.reconstruct {
        let dims = cubic_dims(args.dims)?;
        let spacing = (hi - lo) / (args.dims - 1) as f64;
        for (name, code) in args.shapes.iter().zip(&result.latents.codes) {
            let mesh = din::reconstruct(
                &result.net,
                code,
                dims,
                Vec3::repeat(lo),
                spacing,
                &config.sdc,
            )?;
            let path = with_suffix(&args.output, &format!(".{}.obj", name.label()));
            geom::write_obj(&mesh, &path)?;
            println!(
                "wrote {} ({} vertices, {} triangles)",
                path.display(),
                mesh.vertices.len(),
                mesh.triangles.len(),
            );
        }
    }
    write_manifest(&args.output, "fit-din", args)?;
    println!(
        "wrote {} ({} steps, final loss {:e})",
        args.output.display(),
        result.trace.len(),
        result.trace.last().copied().unwrap_or(f64::NAN),
    );
    Ok(())
}
