use super::*;
use crate::geom::closest_point_on_triangle;
use crate::metrics;
use nalgebra::{DMatrix, DVector};

fn sphere() -> AnalyticShape {
    AnalyticShape::Sphere {
        center: Vec3::zeros(),
        radius: 0.6,
    }
}

fn unit_box_samples(shapes: &[AnalyticShape], per_shape: usize, seed: u64) -> SdfSampleSet {
    SdfSampleSet::from_analytic(shapes, per_shape, Vec3::repeat(-1.0), Vec3::repeat(1.0), seed)
        .unwrap()
}

/// Relative error with an absolute floor, so near-zero gradients compare at
/// a sensible absolute tolerance instead of amplifying rounding noise.
fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-4)
}

#[test]
fn zero_net_outputs_zero_and_last_bias_shifts_it() {
    let mut net = ImplicitNet::zeros(4, &[8, 8]).unwrap();
    let latent = [0.3, -0.1, 0.9, 0.0];
    for p in [Vec3::zeros(), Vec3::new(0.5, -2.0, 7.0)] {
        assert_eq!(net.forward(&latent, p).unwrap(), 0.0);
    }
    // With every weight zero, the output is exactly the last-layer bias.
    net.biases.last_mut().unwrap()[0] = 0.7;
    assert_eq!(net.forward(&latent, Vec3::new(1.0, 2.0, 3.0)).unwrap(), 0.7);

    // Wrong latent width is rejected.
    assert!(net.forward(&[0.0; 3], Vec3::zeros()).is_err());
}

/// Straight-line reference: the same MLP evaluated through nalgebra's dense
/// matrix-vector products.
fn dense_reference(net: &ImplicitNet, latent: &[f64], x: Vec3) -> f64 {
    let mut a = DVector::from_iterator(
        net.layer_sizes[0],
        latent.iter().copied().chain([x.x, x.y, x.z]),
    );
    for l in 0..net.weights.len() {
        let w = DMatrix::from_row_slice(
            net.layer_sizes[l + 1],
            net.layer_sizes[l],
            &net.weights[l],
        );
        let b = DVector::from_column_slice(&net.biases[l]);
        let z = w * a + b;
        a = if l + 1 == net.weights.len() {
            z
        } else {
            z.map(f64::tanh)
        };
    }
    a[0]
}

#[test]
fn forward_matches_independent_dense_reference() {
    let net = ImplicitNet::xavier(5, &[7, 6, 4], 3).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let latent: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() - 0.5).collect();
        let x = Vec3::new(
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
        );
        let fast = net.forward(&latent, x).unwrap();
        let slow = dense_reference(&net, &latent, x);
        assert!((fast - slow).abs() <= 1e-12, "{fast} vs {slow}");
    }
}

/// Worst relative error of `backward` against central finite differences
/// over every weight, bias, and latent component.
fn backward_fd_worst(net: &ImplicitNet, latent: &[f64], x: Vec3, upstream: f64) -> f64 {
    let grads = net.backward(latent, x, upstream).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut probe = net.clone();
    for l in 0..net.weights.len() {
        for k in 0..net.weights[l].len() {
            let orig = probe.weights[l][k];
            probe.weights[l][k] = orig + h;
            let fp = probe.forward(latent, x).unwrap();
            probe.weights[l][k] = orig - h;
            let fm = probe.forward(latent, x).unwrap();
            probe.weights[l][k] = orig;
            worst = worst.max(rel_err(grads.weights[l][k], upstream * (fp - fm) / (2.0 * h)));
        }
        for k in 0..net.biases[l].len() {
            let orig = probe.biases[l][k];
            probe.biases[l][k] = orig + h;
            let fp = probe.forward(latent, x).unwrap();
            probe.biases[l][k] = orig - h;
            let fm = probe.forward(latent, x).unwrap();
            probe.biases[l][k] = orig;
            worst = worst.max(rel_err(grads.biases[l][k], upstream * (fp - fm) / (2.0 * h)));
        }
    }
    let mut lat = latent.to_vec();
    for k in 0..lat.len() {
        let orig = lat[k];
        lat[k] = orig + h;
        let fp = net.forward(&lat, x).unwrap();
        lat[k] = orig - h;
        let fm = net.forward(&lat, x).unwrap();
        lat[k] = orig;
        worst = worst.max(rel_err(grads.latent[k], upstream * (fp - fm) / (2.0 * h)));
    }
    worst
}

#[test]
fn backward_matches_finite_differences() {
    // Two-hidden-unit net, then a deeper one for chain coverage.
    let tiny = ImplicitNet::xavier(2, &[2], 11).unwrap();
    let worst = backward_fd_worst(&tiny, &[0.4, -0.2], Vec3::new(0.3, -0.7, 0.5), 1.7);
    assert!(worst < 1e-5, "tiny net worst rel err {worst}");

    let deeper = ImplicitNet::xavier(3, &[5, 4], 7).unwrap();
    let worst = backward_fd_worst(&deeper, &[0.1, 0.6, -0.3], Vec3::new(-0.2, 0.9, 0.1), -0.8);
    assert!(worst < 1e-5, "deeper net worst rel err {worst}");
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let net = ImplicitNet::xavier(3, &[6, 5], 2).unwrap();
    let grads = net
        .backward(&[0.2, -0.4, 0.1], Vec3::new(0.5, 0.5, -0.5), 0.0)
        .unwrap();
    assert!(grads.weights.iter().flatten().all(|&g| g == 0.0));
    assert!(grads.biases.iter().flatten().all(|&g| g == 0.0));
    assert!(grads.latent.iter().all(|&g| g == 0.0));
}

#[test]
fn weights_feeding_a_disconnected_unit_get_zero_gradient() {
    // Cutting hidden unit 1's only outgoing weight removes its entire
    // influence, so everything feeding it has exactly zero gradient.
    let mut net = ImplicitNet::xavier(2, &[3], 9).unwrap();
    net.weights[1][1] = 0.0;
    let grads = net
        .backward(&[0.3, 0.8], Vec3::new(0.1, 0.2, 0.3), 1.0)
        .unwrap();
    let n0 = net.layer_sizes[0];
    assert!(grads.weights[0][n0..2 * n0].iter().all(|&g| g == 0.0));
    assert_eq!(grads.biases[0][1], 0.0);
}

#[test]
fn sdf_loss_trivial_cases() {
    // Self-consistent targets: set s_i to the network's own outputs; the
    // data term vanishes and the total is exactly the latent penalty.
    let net = ImplicitNet::xavier(2, &[4], 1).unwrap();
    let latents = LatentTable {
        dim: 2,
        codes: vec![vec![0.3, -0.5]],
    };
    let mut samples = unit_box_samples(&[sphere()], 6, 8);
    for k in 0..samples.shapes[0].points.len() {
        samples.shapes[0].distances[k] = net
            .forward(&latents.codes[0], samples.shapes[0].points[k])
            .unwrap();
    }
    let loss = loss_sdf(&net, &latents, &samples, 10.0).unwrap();
    assert_eq!(loss.data, 0.0);
    assert_eq!(loss.total, loss.latent_penalty);
    let expected_penalty = (0.3 * 0.3 + 0.5 * 0.5) / 100.0;
    assert!((loss.latent_penalty - expected_penalty).abs() < 1e-15);

    // Zero net, one sample with s = 1, lambda = 0: loss is exactly 1.
    let zero = ImplicitNet::zeros(2, &[4]).unwrap();
    let latents = LatentTable {
        dim: 2,
        codes: vec![vec![0.0, 0.0]],
    };
    let samples = SdfSampleSet {
        shapes: vec![ShapeSamples {
            points: vec![Vec3::new(0.1, 0.2, 0.3)],
            distances: vec![1.0],
        }],
    };
    let loss = loss_sdf(&zero, &latents, &samples, 10.0).unwrap();
    assert_eq!(loss.total, 1.0);
    assert_eq!(loss.data, 1.0);
    assert_eq!(loss.latent_penalty, 0.0);
}

#[test]
fn sdf_loss_gradient_matches_finite_differences() {
    let net = ImplicitNet::xavier(2, &[3], 21).unwrap();
    let latents = LatentTable::gaussian(2, 2, 0.3, 4).unwrap();
    let samples = unit_box_samples(
        &[
            sphere(),
            AnalyticShape::Box {
                center: Vec3::zeros(),
                half_extents: Vec3::new(0.5, 0.4, 0.6),
            },
        ],
        3,
        15,
    );
    let loss = loss_sdf(&net, &latents, &samples, 10.0).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;

    let mut probe = net.clone();
    for l in 0..net.weights.len() {
        for k in 0..net.weights[l].len() {
            let orig = probe.weights[l][k];
            probe.weights[l][k] = orig + h;
            let fp = loss_sdf(&probe, &latents, &samples, 10.0).unwrap().total;
            probe.weights[l][k] = orig - h;
            let fm = loss_sdf(&probe, &latents, &samples, 10.0).unwrap().total;
            probe.weights[l][k] = orig;
            worst = worst.max(rel_err(loss.weights[l][k], (fp - fm) / (2.0 * h)));
        }
        for k in 0..net.biases[l].len() {
            let orig = probe.biases[l][k];
            probe.biases[l][k] = orig + h;
            let fp = loss_sdf(&probe, &latents, &samples, 10.0).unwrap().total;
            probe.biases[l][k] = orig - h;
            let fm = loss_sdf(&probe, &latents, &samples, 10.0).unwrap().total;
            probe.biases[l][k] = orig;
            worst = worst.max(rel_err(loss.biases[l][k], (fp - fm) / (2.0 * h)));
        }
    }
    let mut probe_lat = latents.clone();
    for j in 0..probe_lat.codes.len() {
        for k in 0..probe_lat.codes[j].len() {
            let orig = probe_lat.codes[j][k];
            probe_lat.codes[j][k] = orig + h;
            let fp = loss_sdf(&net, &probe_lat, &samples, 10.0).unwrap().total;
            probe_lat.codes[j][k] = orig - h;
            let fm = loss_sdf(&net, &probe_lat, &samples, 10.0).unwrap().total;
            probe_lat.codes[j][k] = orig;
            worst = worst.max(rel_err(loss.latents[j][k], (fp - fm) / (2.0 * h)));
        }
    }
    assert!(worst < 1e-5, "worst rel err {worst}");
}

#[test]
fn latent_penalty_scales_quadratically_exactly() {
    let net = ImplicitNet::zeros(3, &[4]).unwrap();
    let samples = unit_box_samples(&[sphere()], 2, 5);
    let base = LatentTable {
        dim: 3,
        codes: vec![vec![0.37, -0.81, 0.05]],
    };
    let doubled = LatentTable {
        dim: 3,
        codes: vec![base.codes[0].iter().map(|v| 2.0 * v).collect()],
    };
    let p1 = loss_sdf(&net, &base, &samples, 10.0).unwrap().latent_penalty;
    let p2 = loss_sdf(&net, &doubled, &samples, 10.0)
        .unwrap()
        .latent_penalty;
    // Scaling a code by 2 scales its penalty by exactly 4 (powers of two
    // commute with rounding).
    assert_eq!(p2, 4.0 * p1);
}

#[test]
fn sdr_loss_trivial_cases() {
    // Predictions equal to +target and to -target both give zero loss.
    for bias in [0.4, -0.4] {
        let mut net = ImplicitNet::zeros(2, &[4]).unwrap();
        net.biases.last_mut().unwrap()[0] = bias;
        let points = vec![Vec3::zeros(), Vec3::new(0.2, 0.1, -0.3)];
        let targets = vec![0.4, 0.4];
        let loss = loss_sdr(&net, &[0.0, 0.0], &points, &targets).unwrap();
        assert_eq!(loss.value, 0.0);
    }

    // f = 0.2 against d* = 0.5 contributes (0.2 - 0.5)^2 = 0.09.
    let mut net = ImplicitNet::zeros(2, &[4]).unwrap();
    net.biases.last_mut().unwrap()[0] = 0.2;
    let loss = loss_sdr(&net, &[0.0, 0.0], &[Vec3::zeros()], &[0.5]).unwrap();
    assert!((loss.value - 0.09).abs() < 1e-15, "{}", loss.value);

    // At f exactly 0 the |f| subgradient is 0: value accrues, gradients stay
    // zero.
    let zero = ImplicitNet::zeros(2, &[4]).unwrap();
    let loss = loss_sdr(&zero, &[0.0, 0.0], &[Vec3::zeros()], &[0.3]).unwrap();
    assert!((loss.value - 0.09).abs() < 1e-15);
    assert!(loss.grads.weights.iter().flatten().all(|&g| g == 0.0));
    assert!(loss.grads.biases.iter().flatten().all(|&g| g == 0.0));
    assert!(loss.grads.latent.iter().all(|&g| g == 0.0));
}

#[test]
fn sdr_loss_gradient_matches_finite_differences() {
    // Shift the output well away from 0 so |f| is smooth at every probe.
    let mut net = ImplicitNet::xavier(2, &[4], 13).unwrap();
    net.biases.last_mut().unwrap()[0] = 0.5;
    let latent = [0.2, -0.6];
    let points: Vec<Vec3> = vec![
        Vec3::new(0.3, 0.1, -0.2),
        Vec3::new(-0.5, 0.4, 0.8),
        Vec3::new(0.0, -0.9, 0.2),
    ];
    for p in &points {
        let f = net.forward(&latent, *p).unwrap();
        assert!(f.abs() > 0.05, "test needs |f| away from zero, got {f}");
    }
    let targets = vec![0.1, 0.25, 0.4];
    let loss = loss_sdr(&net, &latent, &points, &targets).unwrap();

    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut probe = net.clone();
    for l in 0..net.weights.len() {
        for k in 0..net.weights[l].len() {
            let orig = probe.weights[l][k];
            probe.weights[l][k] = orig + h;
            let fp = loss_sdr(&probe, &latent, &points, &targets).unwrap().value;
            probe.weights[l][k] = orig - h;
            let fm = loss_sdr(&probe, &latent, &points, &targets).unwrap().value;
            probe.weights[l][k] = orig;
            worst = worst.max(rel_err(loss.grads.weights[l][k], (fp - fm) / (2.0 * h)));
        }
        for k in 0..net.biases[l].len() {
            let orig = probe.biases[l][k];
            probe.biases[l][k] = orig + h;
            let fp = loss_sdr(&probe, &latent, &points, &targets).unwrap().value;
            probe.biases[l][k] = orig - h;
            let fm = loss_sdr(&probe, &latent, &points, &targets).unwrap().value;
            probe.biases[l][k] = orig;
            worst = worst.max(rel_err(loss.grads.biases[l][k], (fp - fm) / (2.0 * h)));
        }
    }
    let mut lat = latent.to_vec();
    for k in 0..lat.len() {
        let orig = lat[k];
        lat[k] = orig + h;
        let fp = loss_sdr(&net, &lat, &points, &targets).unwrap().value;
        lat[k] = orig - h;
        let fm = loss_sdr(&net, &lat, &points, &targets).unwrap().value;
        lat[k] = orig;
        worst = worst.max(rel_err(loss.grads.latent[k], (fp - fm) / (2.0 * h)));
    }
    assert!(worst < 1e-5, "worst rel err {worst}");
}

#[test]
fn sdr_targets_match_a_brute_force_scan_over_all_faces() {
    // A bias-only linear layer encodes the plane f = x - 0.2 exactly.
    let mut net = ImplicitNet::zeros(0, &[]).unwrap();
    net.weights[0] = vec![1.0, 0.0, 0.0];
    net.biases[0] = vec![-0.2];
    let sdc = SdcConfig {
        max_iters: 40,
        ..SdcConfig::default()
    };
    let t = sdr_targets(&net, &[], [8; 3], Vec3::repeat(-1.0), 2.0 / 7.0, &sdc).unwrap();
    assert!(!t.mesh.is_empty());
    assert_eq!(t.points.len(), t.targets.len());
    assert!(!t.points.is_empty());

    for (p, d) in t.points.iter().zip(&t.targets) {
        let mut best = (f64::INFINITY, u32::MAX);
        for f in 0..t.mesh.triangles.len() {
            let [a, b, c] = t.mesh.triangle(f);
            let (cp, _, _) = closest_point_on_triangle(*p, a, b, c);
            let key = ((p - cp).norm_squared(), f as u32);
            if key < best {
                best = key;
            }
        }
        assert_eq!(*d, best.0.sqrt());
    }
}

#[test]
fn training_diverges_loudly_under_an_absurd_learning_rate() {
    let config = DinTrainConfig {
        latent_dim: 2,
        hidden: vec![8],
        steps: 5,
        learning_rate: 1e200,
        ..DinTrainConfig::default()
    };
    let samples = unit_box_samples(&[sphere()], 4, 2);
    match train_din(&samples, &config, false) {
        Err(Error::Numerical(msg)) => assert!(msg.contains("diverged"), "{msg}"),
        other => panic!("expected numerical divergence, got {other:?}"),
    }
}

fn tiny_config() -> DinTrainConfig {
    DinTrainConfig {
        latent_dim: 4,
        hidden: vec![16, 16],
        steps: 30,
        refresh_interval: 25,
        reg_dims: [12; 3],
        reg_spacing: 2.0 / 11.0,
        seed: 6,
        sdc: SdcConfig {
            max_iters: 20,
            ..SdcConfig::default()
        },
        ..DinTrainConfig::default()
    }
}

#[test]
fn zero_regularizer_weight_is_structurally_identical_to_disabling_it() {
    let samples = unit_box_samples(&[sphere()], 8, 3);
    let config = DinTrainConfig {
        alpha_sdr: 0.0,
        ..tiny_config()
    };
    let with_flag = train_din(&samples, &config, true).unwrap();
    let without = train_din(&samples, &config, false).unwrap();
    assert_eq!(with_flag.trace, without.trace);
    assert_eq!(with_flag.net, without.net);
    assert_eq!(with_flag.latents, without.latents);
    // Nothing was ever extracted in either run.
    assert!(with_flag.refreshes.is_empty());
    assert!(without.refreshes.is_empty());

    // Rerunning the same configuration reproduces the trace bitwise.
    let again = train_din(&samples, &config, false).unwrap();
    assert_eq!(again.trace, without.trace);
}

#[test]
fn active_regularizer_refreshes_on_schedule() {
    let samples = unit_box_samples(&[sphere()], 8, 3);
    let config = tiny_config(); // 30 steps, refresh every 25
    let result = train_din(&samples, &config, true).unwrap();
    assert_eq!(result.trace.len(), config.steps);
    assert!(result.trace.iter().all(|l| l.is_finite()));
    let steps: Vec<usize> = result.refreshes.iter().map(|r| r.step).collect();
    assert_eq!(steps, vec![0, 25]);
    for refresh in &result.refreshes {
        assert_eq!(refresh.per_shape.len(), 1);
    }
}

#[test]
fn training_overfits_a_small_sample_set() {
    // 16 targets against ~52k parameters: 2000 full-batch steps drive the
    // data term far below the 1e-4 bound.
    let samples = unit_box_samples(&[sphere()], 16, 3);
    let config = DinTrainConfig {
        steps: 2000,
        seed: 7,
        ..DinTrainConfig::default()
    };
    let result = train_din(&samples, &config, false).unwrap();
    let final_loss = loss_sdf(&result.net, &result.latents, &samples, config.sigma_lat).unwrap();
    assert!(
        final_loss.data < 1e-4,
        "data term after overfit: {}",
        final_loss.data
    );
}

#[test]
fn reconstruction_recovers_a_trained_sphere() {
    // Denser supervision pins the zero set down geometrically; the decayed
    // rate settles the late iterations.
    let samples = unit_box_samples(&[sphere()], 128, 3);
    let config = DinTrainConfig {
        steps: 1200,
        lr_decay: (0.1f64).powf(1.0 / 1200.0),
        seed: 7,
        ..DinTrainConfig::default()
    };
    let result = train_din(&samples, &config, false).unwrap();

    // The reconstructed surface lands within two cells of the true sphere.
    let dims = [32; 3];
    let spacing = 2.0 / 31.0;
    let mesh = reconstruct(
        &result.net,
        &result.latents.codes[0],
        dims,
        Vec3::repeat(-1.0),
        spacing,
        &SdcConfig::default(),
    )
    .unwrap();
    let sample = |m: &TriMesh, seed| -> Vec<Vec3> {
        geom::sample_surface(m, 4096, seed)
            .unwrap()
            .into_iter()
            .map(|s| s.position)
            .collect()
    };
    let reference = metrics::tests::icosphere(0.6, 3);
    let cd = metrics::chamfer(&sample(&mesh, 1), &sample(&reference, 2)).unwrap();
    assert!(cd < 2.0 * spacing, "chamfer distance {cd}");
}

#[test]
fn reconstruct_rejects_a_field_with_no_surface() {
    let net = ImplicitNet::zeros(2, &[4]).unwrap();
    let err = reconstruct(
        &net,
        &[0.0, 0.0],
        [8; 3],
        Vec3::repeat(-1.0),
        2.0 / 7.0,
        &SdcConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::EmptyMesh(_)));
}

#[test]
fn reconstruction_is_deterministic() {
    let mut net = ImplicitNet::zeros(0, &[]).unwrap();
    net.weights[0] = vec![1.0, 0.0, 0.0];
    net.biases[0] = vec![-0.2];
    let sdc = SdcConfig {
        max_iters: 30,
        ..SdcConfig::default()
    };
    let a = reconstruct(&net, &[], [8; 3], Vec3::repeat(-1.0), 2.0 / 7.0, &sdc).unwrap();
    let b = reconstruct(&net, &[], [8; 3], Vec3::repeat(-1.0), 2.0 / 7.0, &sdc).unwrap();
    assert_eq!(a.vertices, b.vertices);
    assert_eq!(a.triangles, b.triangles);
}

#[test]
fn checkpoint_round_trips_bit_exactly() {
    let net = ImplicitNet::xavier(5, &[9, 4], 17).unwrap();
    let latents = LatentTable::gaussian(3, 5, 0.01, 18).unwrap();

    let mut bytes = Vec::new();
    write_checkpoint_to(&net, &latents, &mut bytes).unwrap();
    let (net2, latents2) = read_checkpoint_from(&mut bytes.as_slice()).unwrap();
    assert_eq!(net, net2);
    assert_eq!(latents, latents2);

    // Bit-exactness: re-serializing the loaded model reproduces the bytes.
    let mut bytes2 = Vec::new();
    write_checkpoint_to(&net2, &latents2, &mut bytes2).unwrap();
    assert_eq!(bytes, bytes2);

    // Through a file as well.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.dinc");
    write_checkpoint(&path, &net, &latents).unwrap();
    let (net3, latents3) = read_checkpoint(&path).unwrap();
    assert_eq!(net, net3);
    assert_eq!(latents, latents3);
}

#[test]
fn checkpoint_reader_rejects_malformed_input() {
    let net = ImplicitNet::xavier(2, &[3], 1).unwrap();
    let latents = LatentTable::gaussian(1, 2, 0.01, 2).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint_to(&net, &latents, &mut bytes).unwrap();

    // Bad magic.
    let mut bad = bytes.clone();
    bad[0] = b'X';
    match read_checkpoint_from(&mut bad.as_slice()) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
        other => panic!("expected format error, got {other:?}"),
    }

    // Unsupported version.
    let mut bad = bytes.clone();
    bad[4..8].copy_from_slice(&2u32.to_le_bytes());
    match read_checkpoint_from(&mut bad.as_slice()) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 4),
        other => panic!("expected format error, got {other:?}"),
    }

    // Truncated parameter block.
    let bad = &bytes[..bytes.len() - 4];
    assert!(matches!(
        read_checkpoint_from(&mut &bad[..]),
        Err(Error::Format { .. })
    ));

    // Non-finite parameter. The first weight sits right after the
    // 20-byte header and the layer-size list.
    let first_weight = 20 + 4 * net.layer_sizes.len();
    let mut bad = bytes.clone();
    bad[first_weight..first_weight + 8].copy_from_slice(&f64::NAN.to_le_bytes());
    match read_checkpoint_from(&mut bad.as_slice()) {
        Err(Error::Format { offset, message }) => {
            assert_eq!(offset, first_weight as u64);
            assert!(message.contains("non-finite"), "{message}");
        }
        other => panic!("expected format error, got {other:?}"),
    }

    // Trailing garbage.
    let mut bad = bytes.clone();
    bad.push(0);
    match read_checkpoint_from(&mut bad.as_slice()) {
        Err(Error::Format { message, .. }) => assert!(message.contains("trailing"), "{message}"),
        other => panic!("expected format error, got {other:?}"),
    }

    // Latent table incompatible with the net is refused at write time.
    let wrong = LatentTable::gaussian(1, 3, 0.01, 2).unwrap();
    assert!(matches!(
        write_checkpoint_to(&net, &wrong, &mut Vec::new()),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn configs_and_inputs_are_validated() {
    assert!(ImplicitNet::zeros(2, &[4, 0, 4]).is_err());

    let bad = DinTrainConfig {
        sigma_lat: 0.0,
        ..DinTrainConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = DinTrainConfig {
        refresh_interval: 0,
        ..DinTrainConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = DinTrainConfig {
        learning_rate: 0.0,
        ..DinTrainConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = DinTrainConfig {
        lr_decay: 1.5,
        ..DinTrainConfig::default()
    };
    assert!(bad.validate().is_err());
    assert!(DinTrainConfig::default().validate().is_ok());

    // Sample sets must be shaped consistently.
    assert!(SdfSampleSet { shapes: vec![] }.validate().is_err());
    let ragged = SdfSampleSet {
        shapes: vec![ShapeSamples {
            points: vec![Vec3::zeros()],
            distances: vec![],
        }],
    };
    assert!(ragged.validate().is_err());

    // Latent/shape mismatches are rejected by the loss.
    let net = ImplicitNet::zeros(2, &[4]).unwrap();
    let latents = LatentTable::gaussian(2, 2, 0.01, 1).unwrap();
    let samples = unit_box_samples(&[sphere()], 2, 1);
    assert!(matches!(
        loss_sdf(&net, &latents, &samples, 10.0),
        Err(Error::InvalidParameter(_))
    ));
}
