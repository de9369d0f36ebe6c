//! Toy auto-decoder implicit network.
//!
//! A small tanh MLP maps a concatenated `(latent, position)` input to a
//! signed distance. Each training shape owns a latent code; network weights
//! and codes are optimized jointly against sampled ground-truth distances
//! (with a latent-compactness penalty), optionally regularized so the
//! predicted distance field agrees with the unsigned distance to the mesh
//! extracted from the network's own grid predictions.
//!
//! Everything differentiates by hand-written exact reverse mode — no autodiff
//! dependency — so gradients can be audited against finite differences.

use crate::error::{Error, Result};
use crate::geom::{self, SpatialIndex, TriMesh, Vec3};
use crate::grid::{near_surface_nodes, AnalyticShape, SdfGrid};
use crate::sdc::{mesh_sdc, SdcConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::io::{Read, Write};
use std::path::Path;

/// Multilayer perceptron over a `(latent, position)` input.
///
/// Layer sizes run `[latent_dim + 3, hidden..., 1]`; hidden layers apply
/// tanh, the output layer is linear. Weights are stored row-major per layer
/// (`weights[l][o * n_in + i]` connects input `i` to output `o`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitNet {
    layer_sizes: Vec<usize>,
    latent_dim: usize,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Gradients of a scalar function of one network evaluation, shaped like the
/// network's parameters plus the latent code that was fed in.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub latent: Vec<f64>,
}

impl NetGrads {
    pub fn zeros_like(net: &ImplicitNet) -> Self {
        NetGrads {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            latent: vec![0.0; net.latent_dim],
        }
    }
}

/// Scratch buffers for one forward/backward pass, reusable across samples.
struct Workspace {
    /// Post-activation values per layer; `acts[0]` is the assembled input.
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    prev: Vec<f64>,
}

impl Workspace {
    fn new(net: &ImplicitNet) -> Self {
        Workspace {
            acts: net.layer_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            delta: Vec::new(),
            prev: Vec::new(),
        }
    }
}

impl ImplicitNet {
    fn check_architecture(hidden: &[usize]) -> Result<()> {
        if hidden.contains(&0) {
            return Err(Error::InvalidParameter(
                "hidden layer sizes must be positive".into(),
            ));
        }
        Ok(())
    }

    /// All-zero network: outputs 0 everywhere. Useful as a blank slate.
    pub fn zeros(latent_dim: usize, hidden: &[usize]) -> Result<Self> {
        Self::check_architecture(hidden)?;
        let mut layer_sizes = Vec::with_capacity(hidden.len() + 2);
        layer_sizes.push(latent_dim + 3);
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(1);
        let weights = (0..layer_sizes.len() - 1)
            .map(|l| vec![0.0; layer_sizes[l] * layer_sizes[l + 1]])
            .collect();
        let biases = (0..layer_sizes.len() - 1)
            .map(|l| vec![0.0; layer_sizes[l + 1]])
            .collect();
        Ok(ImplicitNet {
            layer_sizes,
            latent_dim,
            weights,
            biases,
        })
    }

    /// Xavier/Glorot-uniform initialization: weights of layer `l` drawn from
    /// `U(-a, a)` with `a = sqrt(6 / (n_in + n_out))`, biases zero. Draw
    /// order (layers first-to-last, rows in order) is fixed, so a seed fully
    /// determines the network.
    pub fn xavier(latent_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(latent_dim, hidden)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..net.weights.len() {
            let bound = (6.0 / (net.layer_sizes[l] + net.layer_sizes[l + 1]) as f64).sqrt();
            for w in &mut net.weights[l] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    fn check_latent(&self, latent: &[f64]) -> Result<()> {
        if latent.len() != self.latent_dim {
            return Err(Error::InvalidParameter(format!(
                "latent has {} components, network expects {}",
                latent.len(),
                self.latent_dim
            )));
        }
        Ok(())
    }

    fn forward_with(&self, latent: &[f64], x: Vec3, ws: &mut Workspace) -> f64 {
        let input = &mut ws.acts[0];
        input[..self.latent_dim].copy_from_slice(latent);
        input[self.latent_dim] = x.x;
        input[self.latent_dim + 1] = x.y;
        input[self.latent_dim + 2] = x.z;

        let n_layers = self.weights.len();
        for l in 0..n_layers {
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let a_in = &head[l];
            let a_out = &mut tail[0];
            let n_in = self.layer_sizes[l];
            let w = &self.weights[l];
            let b = &self.biases[l];
            let last = l + 1 == n_layers;
            for (o, out) in a_out.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut s = b[o];
                for i in 0..n_in {
                    s += row[i] * a_in[i];
                }
                *out = if last { s } else { s.tanh() };
            }
        }
        ws.acts[n_layers][0]
    }

    /// Reverse-mode pass for the evaluation currently held in `ws`,
    /// accumulating `upstream * d(output)/d(param)` into the gradient buffers.
    fn backward_with(
        &self,
        ws: &mut Workspace,
        upstream: f64,
        grad_w: &mut [Vec<f64>],
        grad_b: &mut [Vec<f64>],
        grad_latent: &mut [f64],
    ) {
        ws.delta.clear();
        ws.delta.push(upstream); // d/d z_L: the output layer is linear.
        for l in (0..self.weights.len()).rev() {
            let n_in = self.layer_sizes[l];
            let n_out = self.layer_sizes[l + 1];
            let a_in = &ws.acts[l];
            let w = &self.weights[l];
            for o in 0..n_out {
                let d = ws.delta[o];
                grad_b[l][o] += d;
                let row = &mut grad_w[l][o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    row[i] += d * a_in[i];
                }
            }
            if l == 0 {
                // The input layer is (latent, x); only the latent is a
                // trainable quantity.
                for (i, g) in grad_latent.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for o in 0..n_out {
                        s += ws.delta[o] * w[o * n_in + i];
                    }
                    *g += s;
                }
            } else {
                ws.prev.clear();
                ws.prev.resize(n_in, 0.0);
                for o in 0..n_out {
                    let d = ws.delta[o];
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (p, r) in ws.prev.iter_mut().zip(row) {
                        *p += d * r;
                    }
                }
                // a_in = tanh(z_in), so dz = da * (1 - a^2).
                for (p, a) in ws.prev.iter_mut().zip(a_in) {
                    *p *= 1.0 - a * a;
                }
                std::mem::swap(&mut ws.delta, &mut ws.prev);
            }
        }
    }

    /// Evaluate the network at `(latent, x)`.
    pub fn forward(&self, latent: &[f64], x: Vec3) -> Result<f64> {
        self.check_latent(latent)?;
        let mut ws = Workspace::new(self);
        Ok(self.forward_with(latent, x, &mut ws))
    }

    /// Exact gradients of `upstream * forward(latent, x)` with respect to
    /// every weight, bias, and the latent code.
    pub fn backward(&self, latent: &[f64], x: Vec3, upstream: f64) -> Result<NetGrads> {
        self.check_latent(latent)?;
        let mut ws = Workspace::new(self);
        self.forward_with(latent, x, &mut ws);
        let mut grads = NetGrads::zeros_like(self);
        self.backward_with(
            &mut ws,
            upstream,
            &mut grads.weights,
            &mut grads.biases,
            &mut grads.latent,
        );
        Ok(grads)
    }

    /// Evaluate the network at every node of a grid.
    pub fn predict_grid(
        &self,
        latent: &[f64],
        dims: [usize; 3],
        origin: Vec3,
        spacing: f64,
    ) -> Result<SdfGrid> {
        self.check_latent(latent)?;
        SdfGrid::from_fn(dims, origin, spacing, true, |p| {
            let mut ws = Workspace::new(self);
            self.forward_with(latent, p, &mut ws)
        })
    }
}

/// One latent code per training shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTable {
    pub dim: usize,
    pub codes: Vec<Vec<f64>>,
}

impl LatentTable {
    /// Codes drawn i.i.d. from `N(0, std^2)` in shape order.
    pub fn gaussian(n_shapes: usize, dim: usize, std: f64, seed: u64) -> Result<Self> {
        let normal = Normal::new(0.0, std)
            .map_err(|e| Error::InvalidParameter(format!("latent init std: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let codes = (0..n_shapes)
            .map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        Ok(LatentTable { dim, codes })
    }

    pub fn validate(&self) -> Result<()> {
        for (j, code) in self.codes.iter().enumerate() {
            if code.len() != self.dim {
                return Err(Error::InvalidParameter(format!(
                    "latent code {j} has {} components, table says {}",
                    code.len(),
                    self.dim
                )));
            }
            if code.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "latent code {j} contains a non-finite component"
                )));
            }
        }
        Ok(())
    }
}

/// Ground-truth signed-distance samples for one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSamples {
    pub points: Vec<Vec3>,
    pub distances: Vec<f64>,
}

/// Training data: one sample batch per shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfSampleSet {
    pub shapes: Vec<ShapeSamples>,
}

impl SdfSampleSet {
    pub fn validate(&self) -> Result<()> {
        if self.shapes.is_empty() {
            return Err(Error::Precondition(
                "sample set must contain at least one shape".into(),
            ));
        }
        for (j, s) in self.shapes.iter().enumerate() {
            if s.points.is_empty() {
                return Err(Error::Precondition(format!(
                    "shape {j} has no samples; every shape needs K >= 1"
                )));
            }
            if s.points.len() != s.distances.len() {
                return Err(Error::InvalidParameter(format!(
                    "shape {j}: {} points but {} distances",
                    s.points.len(),
                    s.distances.len()
                )));
            }
            let finite = s.distances.iter().all(|d| d.is_finite())
                && s.points.iter().all(|p| p.iter().all(|v| v.is_finite()));
            if !finite {
                return Err(Error::InvalidParameter(format!(
                    "shape {j} contains non-finite sample data"
                )));
            }
        }
        Ok(())
    }

    /// Uniform points in the box `[lo, hi]` with exact analytic distances,
    /// `per_shape` samples per shape, drawn in shape order from one seeded
    /// stream.
    pub fn from_analytic(
        shapes: &[AnalyticShape],
        per_shape: usize,
        lo: Vec3,
        hi: Vec3,
        seed: u64,
    ) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::Precondition(
                "sample set must contain at least one shape".into(),
            ));
        }
        if per_shape == 0 {
            return Err(Error::InvalidParameter(
                "per_shape must be at least 1".into(),
            ));
        }
        if !(0..3).all(|a| hi[a] > lo[a]) {
            return Err(Error::InvalidParameter(format!(
                "sampling box is empty: lo {lo:?}, hi {hi:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(shapes.len());
        for shape in shapes {
            shape.validate()?;
            let mut points = Vec::with_capacity(per_shape);
            let mut distances = Vec::with_capacity(per_shape);
            for _ in 0..per_shape {
                let p = Vec3::new(
                    lo.x + (hi.x - lo.x) * rng.gen::<f64>(),
                    lo.y + (hi.y - lo.y) * rng.gen::<f64>(),
                    lo.z + (hi.z - lo.z) * rng.gen::<f64>(),
                );
                points.push(p);
                distances.push(shape.signed_distance(p));
            }
            out.push(ShapeSamples { points, distances });
        }
        Ok(SdfSampleSet { shapes: out })
    }
}

/// Settings for [`train_din`].
#[derive(Debug, Clone, PartialEq)]
pub struct DinTrainConfig {
    pub latent_dim: usize,
    /// Hidden layer widths (tanh).
    pub hidden: Vec<usize>,
    /// Latent-penalty scale: the penalty weight is `1 / sigma_lat^2`.
    pub sigma_lat: f64,
    /// Weight of the mesh-agreement regularizer.
    pub alpha_sdr: f64,
    /// Grid the regularizer extracts meshes on.
    pub reg_dims: [usize; 3],
    pub reg_origin: Vec3,
    pub reg_spacing: f64,
    /// Refresh the extracted mesh (and frozen distance targets) every this
    /// many steps.
    pub refresh_interval: usize,
    pub steps: usize,
    pub learning_rate: f64,
    /// Per-step multiplicative learning-rate decay; the rate at step `t` is
    /// `learning_rate * lr_decay^t`. 1.0 keeps the rate constant. Fixed-rate
    /// Adam settles into a small limit cycle on this full-batch objective;
    /// decay lets long runs converge arbitrarily deep.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub latent_init_std: f64,
    /// Inner vertex-optimization settings for regularizer mesh extraction
    /// (reduced iteration budget by default).
    pub sdc: SdcConfig,
}

impl Default for DinTrainConfig {
    fn default() -> Self {
        DinTrainConfig {
            latent_dim: 16,
            hidden: vec![128, 128, 128, 128],
            sigma_lat: 10.0,
            alpha_sdr: 0.01,
            reg_dims: [32; 3],
            reg_origin: Vec3::repeat(-1.0),
            reg_spacing: 2.0 / 31.0,
            refresh_interval: 25,
            steps: 2000,
            learning_rate: 1e-3,
            lr_decay: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            latent_init_std: 0.01,
            // Refresh meshes supply distance targets, not final surfaces; a
            // reduced iteration budget keeps refreshes cheap.
            sdc: SdcConfig {
                max_iters: 60,
                ..SdcConfig::default()
            },
        }
    }
}

impl DinTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(msg.into()))
            }
        };
        ImplicitNet::check_architecture(&self.hidden)?;
        check(self.sigma_lat > 0.0, "sigma_lat must be positive")?;
        check(self.alpha_sdr >= 0.0, "alpha_sdr must be non-negative")?;
        check(
            self.reg_dims.iter().all(|&d| d >= 2),
            "regularizer grid needs at least 2 nodes per axis",
        )?;
        check(
            self.reg_spacing > 0.0,
            "regularizer grid spacing must be positive",
        )?;
        check(self.refresh_interval >= 1, "refresh_interval must be >= 1")?;
        check(self.steps >= 1, "steps must be >= 1")?;
        check(self.learning_rate > 0.0, "learning_rate must be positive")?;
        check(
            self.lr_decay > 0.0 && self.lr_decay <= 1.0,
            "lr_decay must lie in (0, 1]",
        )?;
        check(
            (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2),
            "Adam betas must lie in [0, 1)",
        )?;
        check(self.adam_epsilon > 0.0, "adam_epsilon must be positive")?;
        check(
            self.latent_init_std >= 0.0,
            "latent_init_std must be non-negative",
        )?;
        self.sdc.validate()
    }
}

/// Value and exact gradients of the sample-regression loss
/// `sum_j sum_i (f(lambda_j, x_i) - s_i)^2 + (1/sigma^2) |lambda_j|^2`.
#[derive(Debug, Clone)]
pub struct SdfLoss {
    pub total: f64,
    /// The squared-residual part alone.
    pub data: f64,
    /// The latent-compactness part alone.
    pub latent_penalty: f64,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    /// One gradient per shape's latent code.
    pub latents: Vec<Vec<f64>>,
}

/// Sample-regression loss over all shapes, with exact gradients.
pub fn loss_sdf(
    net: &ImplicitNet,
    latents: &LatentTable,
    samples: &SdfSampleSet,
    sigma_lat: f64,
) -> Result<SdfLoss> {
    samples.validate()?;
    latents.validate()?;
    if !(sigma_lat > 0.0) {
        return Err(Error::InvalidParameter("sigma_lat must be positive".into()));
    }
    if latents.dim != net.latent_dim {
        return Err(Error::InvalidParameter(format!(
            "latent table dim {} does not match network latent dim {}",
            latents.dim, net.latent_dim
        )));
    }
    if latents.codes.len() != samples.shapes.len() {
        return Err(Error::InvalidParameter(format!(
            "{} latent codes for {} shapes",
            latents.codes.len(),
            samples.shapes.len()
        )));
    }

    let mut ws = Workspace::new(net);
    let mut grad_w: Vec<Vec<f64>> = net.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut grad_b: Vec<Vec<f64>> = net.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut grad_lat: Vec<Vec<f64>> = latents
        .codes
        .iter()
        .map(|c| vec![0.0; c.len()])
        .collect();

    let mut data = 0.0;
    let mut penalty = 0.0;
    let weight = 1.0 / (sigma_lat * sigma_lat);
    for (j, shape) in samples.shapes.iter().enumerate() {
        let code = &latents.codes[j];
        for (p, s) in shape.points.iter().zip(&shape.distances) {
            let f = net.forward_with(code, *p, &mut ws);
            let r = f - s;
            data += r * r;
            net.backward_with(&mut ws, 2.0 * r, &mut grad_w, &mut grad_b, &mut grad_lat[j]);
        }
        let norm_sq: f64 = code.iter().map(|v| v * v).sum();
        penalty += weight * norm_sq;
        for (g, v) in grad_lat[j].iter_mut().zip(code) {
            *g += 2.0 * weight * v;
        }
    }
    Ok(SdfLoss {
        total: data + penalty,
        data,
        latent_penalty: penalty,
        weights: grad_w,
        biases: grad_b,
        latents: grad_lat,
    })
}

/// Value and exact gradients of the mesh-agreement regularizer
/// `sum_g (|f(lambda, g)| - d*(g))^2` for one shape.
#[derive(Debug, Clone)]
pub struct SdrLoss {
    pub value: f64,
    pub grads: NetGrads,
}

/// Mesh-agreement regularizer against frozen targets.
///
/// `targets[k]` is the unsigned distance from `points[k]` to the extracted
/// mesh, held constant between refreshes (no gradient flows through the
/// mesh). The absolute value differentiates with `sign(f)`, defined as 0 at
/// exactly 0.
pub fn loss_sdr(
    net: &ImplicitNet,
    latent: &[f64],
    points: &[Vec3],
    targets: &[f64],
) -> Result<SdrLoss> {
    net.check_latent(latent)?;
    if points.len() != targets.len() {
        return Err(Error::InvalidParameter(format!(
            "{} points but {} distance targets",
            points.len(),
            targets.len()
        )));
    }
    let mut ws = Workspace::new(net);
    let mut grads = NetGrads::zeros_like(net);
    let mut value = 0.0;
    for (p, d_star) in points.iter().zip(targets) {
        let f = net.forward_with(latent, *p, &mut ws);
        let r = f.abs() - d_star;
        value += r * r;
        let sign = if f > 0.0 {
            1.0
        } else if f < 0.0 {
            -1.0
        } else {
            0.0
        };
        if sign != 0.0 {
            net.backward_with(
                &mut ws,
                2.0 * r * sign,
                &mut grads.weights,
                &mut grads.biases,
                &mut grads.latent,
            );
        }
    }
    Ok(SdrLoss { value, grads })
}

/// Frozen regularizer targets: the shell nodes of a predicted grid and their
/// unsigned distances to the mesh extracted from that grid.
#[derive(Debug, Clone)]
pub struct SdrTargets {
    pub points: Vec<Vec3>,
    pub targets: Vec<f64>,
    pub mesh: TriMesh,
}

/// Extract a mesh from the network's current grid predictions and compute
/// frozen distance targets on the grid's near-surface shell.
pub fn sdr_targets(
    net: &ImplicitNet,
    latent: &[f64],
    dims: [usize; 3],
    origin: Vec3,
    spacing: f64,
    sdc: &SdcConfig,
) -> Result<SdrTargets> {
    let grid = net.predict_grid(latent, dims, origin, spacing)?;
    let mesh = mesh_sdc(&grid, sdc)?.mesh.triangulate();
    let shell = near_surface_nodes(&grid, sdc.tau);
    let index = SpatialIndex::build(&mesh);
    let mut points = Vec::with_capacity(shell.len());
    let mut targets = Vec::with_capacity(shell.len());
    for &node in shell.iter() {
        let p = grid.node_position(node);
        points.push(p);
        targets.push(geom::closest_point(&mesh, &index, p)?.distance);
    }
    Ok(SdrTargets {
        points,
        targets,
        mesh,
    })
}

/// What happened to one shape at a regularizer refresh.
#[derive(Debug, Clone, PartialEq)]
pub enum RefreshOutcome {
    Extracted { faces: usize, shell_nodes: usize },
    /// Extraction found no surface; the regularizer is skipped for this
    /// shape until the next refresh.
    Skipped { reason: String },
}

/// Record of one regularizer refresh (all shapes).
#[derive(Debug, Clone, PartialEq)]
pub struct SdrRefresh {
    pub step: usize,
    pub per_shape: Vec<RefreshOutcome>,
}

/// Everything [`train_din`] produces.
#[derive(Debug, Clone)]
pub struct DinTrainResult {
    pub net: ImplicitNet,
    pub latents: LatentTable,
    /// Total loss per step.
    pub trace: Vec<f64>,
    /// Regularizer refresh log; empty when the regularizer never ran.
    pub refreshes: Vec<SdrRefresh>,
}

/// Adam state for one flat parameter block.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], t: f64, lr: f64, config: &DinTrainConfig) {
        let bias1 = 1.0 - config.beta1.powf(t);
        let bias2 = 1.0 - config.beta2.powf(t);
        for i in 0..params.len() {
            self.m[i] = config.beta1 * self.m[i] + (1.0 - config.beta1) * grads[i];
            self.v[i] = config.beta2 * self.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + config.adam_epsilon);
        }
    }
}

/// Jointly train network weights and per-shape latents with full-batch Adam.
///
/// Minimizes the sample-regression loss plus `alpha_sdr` times the
/// mesh-agreement regularizer. When the regularizer is active (`use_sdr` and
/// `alpha_sdr != 0`), every `refresh_interval` steps the network is evaluated
/// on the regularizer grid per shape, a mesh is extracted, and frozen
/// distance targets are recomputed; a shape whose grid has no surface skips
/// the regularizer until the next refresh. With `use_sdr` false (or a zero
/// weight) no extraction ever runs, so the trace is bitwise identical to a
/// plain regression run. Deterministic for a fixed config.
pub fn train_din(
    samples: &SdfSampleSet,
    config: &DinTrainConfig,
    use_sdr: bool,
) -> Result<DinTrainResult> {
    config.validate()?;
    samples.validate()?;
    let n_shapes = samples.shapes.len();
    let mut net = ImplicitNet::xavier(config.latent_dim, &config.hidden, config.seed)?;
    let mut latents = LatentTable::gaussian(
        n_shapes,
        config.latent_dim,
        config.latent_init_std,
        config.seed.wrapping_add(1),
    )?;

    let mut adam_w: Vec<Adam> = net.weights.iter().map(|w| Adam::new(w.len())).collect();
    let mut adam_b: Vec<Adam> = net.biases.iter().map(|b| Adam::new(b.len())).collect();
    let mut adam_lat: Vec<Adam> = (0..n_shapes)
        .map(|_| Adam::new(config.latent_dim))
        .collect();

    let sdr_on = use_sdr && config.alpha_sdr != 0.0;
    let mut sdr_state: Vec<Option<SdrTargets>> = (0..n_shapes).map(|_| None).collect();
    let mut refreshes = Vec::new();
    let mut trace = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        if sdr_on && step % config.refresh_interval == 0 {
            let mut per_shape = Vec::with_capacity(n_shapes);
            for (code, state) in latents.codes.iter().zip(&mut sdr_state) {
                match sdr_targets(
                    &net,
                    code,
                    config.reg_dims,
                    config.reg_origin,
                    config.reg_spacing,
                    &config.sdc,
                ) {
                    Ok(t) => {
                        per_shape.push(RefreshOutcome::Extracted {
                            faces: t.mesh.triangles.len(),
                            shell_nodes: t.points.len(),
                        });
                        *state = Some(t);
                    }
                    Err(Error::EmptyMesh(reason)) => {
                        per_shape.push(RefreshOutcome::Skipped { reason });
                        *state = None;
                    }
                    Err(other) => return Err(other),
                }
            }
            refreshes.push(SdrRefresh { step, per_shape });
        }

        let sdf = loss_sdf(&net, &latents, samples, config.sigma_lat)?;
        let mut total = sdf.total;
        let mut grad_w = sdf.weights;
        let mut grad_b = sdf.biases;
        let mut grad_lat = sdf.latents;
        if sdr_on {
            for (j, state) in sdr_state.iter().enumerate() {
                let Some(targets) = state else { continue };
                let sdr = loss_sdr(&net, &latents.codes[j], &targets.points, &targets.targets)?;
                total += config.alpha_sdr * sdr.value;
                for (acc, g) in grad_w.iter_mut().zip(&sdr.grads.weights) {
                    for (a, b) in acc.iter_mut().zip(g) {
                        *a += config.alpha_sdr * b;
                    }
                }
                for (acc, g) in grad_b.iter_mut().zip(&sdr.grads.biases) {
                    for (a, b) in acc.iter_mut().zip(g) {
                        *a += config.alpha_sdr * b;
                    }
                }
                for (a, b) in grad_lat[j].iter_mut().zip(&sdr.grads.latent) {
                    *a += config.alpha_sdr * b;
                }
            }
        }

        if !total.is_finite() {
            let recent: Vec<f64> = trace.iter().rev().take(5).copied().collect();
            return Err(Error::Numerical(format!(
                "training diverged at step {step}: loss {total} (recent losses {recent:?})"
            )));
        }
        trace.push(total);

        let t = (step + 1) as f64;
        // powf(1, t) is exactly 1, so the default decay leaves the schedule
        // bitwise identical to constant-rate Adam.
        let lr = config.learning_rate * config.lr_decay.powf(step as f64);
        for l in 0..net.weights.len() {
            adam_w[l].step(&mut net.weights[l], &grad_w[l], t, lr, config);
            adam_b[l].step(&mut net.biases[l], &grad_b[l], t, lr, config);
        }
        for j in 0..n_shapes {
            adam_lat[j].step(&mut latents.codes[j], &grad_lat[j], t, lr, config);
        }
    }

    Ok(DinTrainResult {
        net,
        latents,
        trace,
        refreshes,
    })
}

/// Evaluate the network on a grid and extract the surface mesh.
pub fn reconstruct(
    net: &ImplicitNet,
    latent: &[f64],
    dims: [usize; 3],
    origin: Vec3,
    spacing: f64,
    sdc: &SdcConfig,
) -> Result<TriMesh> {
    let grid = net.predict_grid(latent, dims, origin, spacing)?;
    Ok(mesh_sdc(&grid, sdc)?.mesh.triangulate())
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"DINC";
const CHECKPOINT_VERSION: u32 = 1;

/// Serialize a network and its latent table.
///
/// Layout (all little-endian): magic `DINC`, version u32, latent_dim u32,
/// layer-size count u32, shape count u32, then the layer sizes (u32 each),
/// then per layer its row-major weights and its biases (f64), then the
/// latent codes (f64). Round-trips bit-exactly.
pub fn write_checkpoint_to(
    net: &ImplicitNet,
    latents: &LatentTable,
    w: &mut impl Write,
) -> Result<()> {
    if latents.dim != net.latent_dim {
        return Err(Error::InvalidParameter(format!(
            "latent table dim {} does not match network latent dim {}",
            latents.dim, net.latent_dim
        )));
    }
    latents.validate()?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(net.latent_dim as u32).to_le_bytes())?;
    w.write_all(&(net.layer_sizes.len() as u32).to_le_bytes())?;
    w.write_all(&(latents.codes.len() as u32).to_le_bytes())?;
    for &n in &net.layer_sizes {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    for l in 0..net.weights.len() {
        for v in &net.weights[l] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &net.biases[l] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for code in &latents.codes {
        for v in code {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_checkpoint(
    path: impl AsRef<Path>,
    net: &ImplicitNet,
    latents: &LatentTable,
) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint_to(net, latents, &mut file)?;
    file.flush()?;
    Ok(())
}

/// Byte cursor with offset-carrying format errors.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!(
                    "truncated reading {what}: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let at = self.pos;
        let v = f64::from_le_bytes(self.take(8, what)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Format {
                offset: at as u64,
                message: format!("non-finite value in {what}"),
            });
        }
        Ok(v)
    }
}

/// Deserialize a checkpoint written by [`write_checkpoint_to`].
pub fn read_checkpoint_from(r: &mut impl Read) -> Result<(ImplicitNet, LatentTable)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    let fail = |offset: usize, message: String| Error::Format {
        offset: offset as u64,
        message,
    };

    let magic = cur.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(fail(0, format!("bad magic {magic:?}, expected \"DINC\"")));
    }
    let version = cur.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(fail(
            4,
            format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let latent_dim = cur.u32("latent_dim")? as usize;
    let n_sizes = cur.u32("layer-size count")? as usize;
    let n_shapes = cur.u32("shape count")? as usize;
    if n_sizes < 2 {
        return Err(fail(12, format!("need at least 2 layer sizes, got {n_sizes}")));
    }
    let sizes_at = cur.pos;
    let mut layer_sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        layer_sizes.push(cur.u32("layer sizes")? as usize);
    }
    if layer_sizes[0] != latent_dim + 3 {
        return Err(fail(
            sizes_at,
            format!(
                "first layer size {} does not match latent_dim {latent_dim} + 3",
                layer_sizes[0]
            ),
        ));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(fail(
            sizes_at,
            format!(
                "last layer size must be 1, got {}",
                layer_sizes.last().unwrap()
            ),
        ));
    }
    if layer_sizes.contains(&0) {
        return Err(fail(sizes_at, "zero-width layer".into()));
    }

    let mut weights = Vec::with_capacity(n_sizes - 1);
    let mut biases = Vec::with_capacity(n_sizes - 1);
    for l in 0..n_sizes - 1 {
        let n_w = layer_sizes[l] * layer_sizes[l + 1];
        let mut w = Vec::with_capacity(n_w);
        for _ in 0..n_w {
            w.push(cur.f64("weights")?);
        }
        let n_b = layer_sizes[l + 1];
        let mut b = Vec::with_capacity(n_b);
        for _ in 0..n_b {
            b.push(cur.f64("biases")?);
        }
        weights.push(w);
        biases.push(b);
    }
    let mut codes = Vec::with_capacity(n_shapes);
    for _ in 0..n_shapes {
        let mut code = Vec::with_capacity(latent_dim);
        for _ in 0..latent_dim {
            code.push(cur.f64("latent codes")?);
        }
        codes.push(code);
    }
    if cur.pos != bytes.len() {
        return Err(fail(
            cur.pos,
            format!("{} trailing bytes after checkpoint", bytes.len() - cur.pos),
        ));
    }

    Ok((
        ImplicitNet {
            layer_sizes,
            latent_dim,
            weights,
            biases,
        },
        LatentTable {
            dim: latent_dim,
            codes,
        },
    ))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(ImplicitNet, LatentTable)> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint_from(&mut file)
}

#[cfg(test)]
mod tests;
