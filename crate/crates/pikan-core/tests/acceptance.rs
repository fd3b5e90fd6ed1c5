//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Run with `cargo test -p pikan-core --test acceptance -- --nocapture`
//! to see the per-criterion lines.

use ndarray::{Array1, Array3, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use pikan_core::geometry::{self, CloudCounts, GeometrySpec, SensorCounts, Shape};
use pikan_core::groundtruth::{
    hydrostatic_case, observations, trigonometric_case, DirectFieldAdapter,
};
use pikan_core::jacobi::{self, JacobiParams};
use pikan_core::network::{self, ArchPlan, Family, LayerPlan, NetworkConfig, Variant};
use pikan_core::physics::{self, FluidParams};
use pikan_core::trainer::{self, GeometrySample, TrainConfig};

fn pass(criterion: u32, what: &str) {
    println!("acceptance {criterion:02} {what}: PASS");
}

fn chebyshev_config(variant: Variant, degree: usize, ns: f64, seed: u64) -> NetworkConfig {
    NetworkConfig {
        variant,
        ns_encoder: ns,
        ns_decoder: ns,
        jacobi: JacobiParams::chebyshev_first(degree),
        n_pde: 4,
        seed,
    }
}

#[test]
fn criterion_01_parameter_count_oracle() {
    let started = Instant::now();
    let expected = [666880usize, 888384, 1109888, 1331392, 1552896];
    for (i, degree) in (2..=6).enumerate() {
        let cfg = chebyshev_config(Variant::FullKan, degree, 0.5, 0);
        assert_eq!(
            network::total_param_count(&cfg).unwrap(),
            expected[i],
            "full KAN, degree {degree}, half scale"
        );
    }
    let mlp = chebyshev_config(Variant::FullMlp, 2, 0.85, 0);
    assert_eq!(network::total_param_count(&mlp).unwrap(), 639611);
    assert!(started.elapsed().as_secs_f64() < 1.0, "runtime budget");
    pass(1, "parameter-count oracle");
}

#[test]
fn criterion_02_dimensionless_group_oracle() {
    let params = FluidParams::ra1e5();
    let (ra, pr) = physics::dimensionless(&params, 2.0);
    assert!(
        (ra - 1e5).abs() <= 1e5 * 4.0 * f64::EPSILON,
        "Ra = {ra} (expected 1e5 to machine precision)"
    );
    assert!(
        (pr - 1.0).abs() <= 4.0 * f64::EPSILON,
        "Pr = {pr} (expected 1 to machine precision)"
    );
    pass(2, "dimensionless-group oracle");
}

#[test]
fn criterion_03_jacobi_correctness() {
    let started = Instant::now();

    // Legendre closed forms up to order 6 on a 100-point grid.
    let closed: [fn(f64) -> f64; 7] = [
        |_| 1.0,
        |z| z,
        |z| (3.0 * z * z - 1.0) / 2.0,
        |z| (5.0 * z.powi(3) - 3.0 * z) / 2.0,
        |z| (35.0 * z.powi(4) - 30.0 * z * z + 3.0) / 8.0,
        |z| (63.0 * z.powi(5) - 70.0 * z.powi(3) + 15.0 * z) / 8.0,
        |z| (231.0 * z.powi(6) - 315.0 * z.powi(4) + 105.0 * z * z - 5.0) / 16.0,
    ];
    let legendre = JacobiParams::legendre(6);
    for gi in 0..100 {
        let z = -1.0 + 2.0 * gi as f64 / 99.0;
        let vals = jacobi::eval_basis_scalar(z, &legendre).unwrap();
        for (i, f) in closed.iter().enumerate() {
            assert!(
                (vals[i] - f(z)).abs() < 1e-12,
                "Legendre order {i} at z = {z}"
            );
        }
    }

    // Chebyshev ratio identity P_n(cos θ)/P_n(1) = cos(nθ).
    let chebyshev = JacobiParams::chebyshev_first(6);
    let at_one = jacobi::eval_basis_scalar(1.0, &chebyshev).unwrap();
    for ti in 1..60 {
        let theta = std::f64::consts::PI * ti as f64 / 60.0;
        let vals = jacobi::eval_basis_scalar(theta.cos(), &chebyshev).unwrap();
        for i in 0..=6 {
            assert!(
                (vals[i] / at_one[i] - (i as f64 * theta).cos()).abs() < 1e-10,
                "Chebyshev ratio at order {i}, θ = {theta}"
            );
        }
    }

    // Gegenbauer parity.
    for &exp in &[-0.5, 0.0, 0.5, 1.0, 2.0] {
        let p = JacobiParams::gegenbauer(exp, 6).unwrap();
        for gi in 0..50 {
            let z = -1.0 + 2.0 * gi as f64 / 49.0;
            let pos = jacobi::eval_basis_scalar(z, &p).unwrap();
            let neg = jacobi::eval_basis_scalar(-z, &p).unwrap();
            for i in 0..=6 {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                assert!(
                    (neg[i] - sign * pos[i]).abs() < 1e-12,
                    "parity at exponent {exp}, order {i}, z = {z}"
                );
            }
        }
    }

    assert!(started.elapsed().as_secs_f64() < 5.0, "runtime budget");
    pass(3, "jacobi correctness");
}

#[test]
fn criterion_04_dataset_oracle() {
    let started = Instant::now();
    let specs = geometry::generate_dataset_specs();
    assert_eq!(specs.len(), 135);
    let count = |s: Shape| specs.iter().filter(|g| g.shape == s).count();
    assert_eq!(count(Shape::Nonagon), 40);
    assert_eq!(count(Shape::Octagon), 45);
    assert_eq!(count(Shape::Heptagon), 50);

    // Published closed-form side lengths.
    use std::f64::consts::PI;
    let expected_sides = [
        (Shape::Heptagon, 0.365),
        (Shape::Octagon, 0.8 * (2.0_f64.sqrt() - 1.0)),
        (Shape::Nonagon, 0.365 * (PI / 9.0).sin() / (PI / 7.0).sin()),
    ];
    for (shape, side) in expected_sides {
        for spec in specs.iter().filter(|g| g.shape == shape) {
            assert!(
                (spec.side_length - side).abs() < 1e-12,
                "{shape:?} side length"
            );
        }
    }

    // All 135 default clouds with the published cardinalities.
    let counts = CloudCounts::standard();
    let sensors = SensorCounts::standard();
    for (i, spec) in specs.iter().enumerate() {
        let cloud = geometry::build_cloud(spec, &counts, &sensors, 0.0, 1000 + i as u64).unwrap();
        assert_eq!(cloud.n(), 5000);
        assert_eq!(cloud.idx_interior.len(), 4340);
        assert_eq!(
            cloud.idx_inner_wall.len() + cloud.idx_outer_wall.len(),
            660
        );
        assert_eq!(cloud.idx_outer_wall.len(), 492);
        assert_eq!(cloud.idx_vel_sensors.len(), 105);
        assert_eq!(cloud.idx_pt_sensors.len(), 130);
        cloud.validate().unwrap();
    }

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "all 135 clouds took {elapsed:.1} s");
    pass(4, "dataset oracle");
}

#[test]
fn criterion_05_loss_path_verification() {
    let mut params = FluidParams::ra1e5();
    params.t_cold = 0.5;
    params.t_ref = 0.5;
    let spec = GeometrySpec::new(Shape::Heptagon, 12.0).unwrap();
    let counts = CloudCounts {
        n: 400,
        interior: 320,
        boundary: 80,
        outer: 56,
    };
    let sensors = SensorCounts {
        lattice: 10,
        ring: 6,
        surface: 6,
    };
    let cloud = geometry::build_cloud(&spec, &counts, &sensors, 0.5, 77).unwrap();

    // Hydrostatic case through the direct-field adapter: exact solution,
    // consistent boundary and sensor data, so the total loss vanishes.
    let case = hydrostatic_case(0.5);
    let fields = case.fields(&params, &cloud);
    let obs = observations(&fields, &cloud).unwrap();
    let adapter = DirectFieldAdapter {
        case: &case,
        params: &params,
    };
    let loss = physics::pipn_loss_from_map(&adapter, &cloud, &obs, &params, None).unwrap();
    assert!(
        loss.total < 1e-10,
        "hydrostatic adapter total = {}",
        loss.total
    );

    // Trigonometric manufactured case: residuals with registered sources
    // vanish at 1000 random points, cross-checked against independently
    // written closed forms.
    let trig = trigonometric_case();
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let n = 1000;
    let coords: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let mut max_abs: f64 = 0.0;
    for &(x, y) in &coords {
        use std::f64::consts::PI;
        // Independent oracle forms (eigenfunction identities).
        let u = PI * (PI * x).sin() * (PI * y).cos();
        let v = -PI * (PI * x).cos() * (PI * y).sin();
        let u_x = PI * PI * (PI * x).cos() * (PI * y).cos();
        let u_y = -PI * PI * (PI * x).sin() * (PI * y).sin();
        let v_x = PI * PI * (PI * x).sin() * (PI * y).sin();
        let v_y = -u_x;
        let p_x = -PI * (PI * x).sin() * (PI * y).cos();
        let p_y = -PI * (PI * x).cos() * (PI * y).sin();
        let t = (PI * x / 2.0).cos() * (PI * y / 2.0).cos();
        let t_x = -PI / 2.0 * (PI * x / 2.0).sin() * (PI * y / 2.0).cos();
        let t_y = -PI / 2.0 * (PI * x / 2.0).cos() * (PI * y / 2.0).sin();
        let (s_mx, s_my, s_t) = trig.sources_at(&params, x, y);
        let r_c = u_x + v_y;
        let r_mx = params.rho * (u * u_x + v * u_y) + p_x
            - params.mu * (-PI * PI * u - PI * PI * u)
            - s_mx;
        let fy = params.rho * params.g * params.beta_exp * (t - params.t_ref);
        let r_my = params.rho * (u * v_x + v * v_y) + p_y
            - params.mu * (-PI * PI * v - PI * PI * v)
            - fy
            - s_my;
        let r_e = params.rho * (u * t_x + v * t_y)
            - params.kappa / params.cp * (-PI * PI / 2.0 * t)
            - s_t;
        for r in [r_c, r_mx, r_my, r_e] {
            max_abs = max_abs.max(r.abs());
        }
    }
    assert!(max_abs < 1e-10, "max residual {max_abs}");

    // The same statement through the residual pipeline: RMS residuals of
    // the implementation's own derivatives with sources registered.
    let fields = trig.fields(&params, &cloud);
    let derivs = trig.field_derivatives(&params, &cloud);
    let sources = trig.source_terms(&params, &cloud).unwrap();
    let interior = fields.restrict(&cloud.idx_interior);
    let (c, mx, my, e) =
        physics::pde_residuals(&interior, &derivs, &params, Some(&sources)).unwrap();
    for (name, r) in [("continuity", c), ("momentum_x", mx), ("momentum_y", my), ("energy", e)] {
        assert!(r.sqrt() < 1e-10, "{name} RMS residual {}", r.sqrt());
    }
    pass(5, "loss-path verification");
}

/// Width-≤8 plan used by the derivative-fidelity criterion.
fn tiny_plan(enc: Family, dec: Family, degree: usize) -> ArchPlan {
    let layer = |d_in, d_out, family, bn| LayerPlan {
        d_in,
        d_out,
        family,
        batch_norm: bn,
    };
    ArchPlan {
        encoder_local: vec![layer(2, 5, enc, true)],
        encoder_global: vec![layer(5, 6, enc, true), layer(6, 8, enc, true)],
        decoder: vec![layer(13, 7, dec, true), layer(7, 4, dec, false)],
        jacobi: JacobiParams::chebyshev_first(degree),
    }
}

fn random_coords(b: usize, n: usize, seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_fn((b, n, 2), |_| rng.random_range(-0.95..0.95))
}

#[test]
fn criterion_06_derivative_fidelity() {
    let started = Instant::now();
    let cases = [
        (Family::Kan, Family::Kan, 2, 31u64),
        (Family::Kan, Family::Kan, 3, 32),
        (Family::Mlp, Family::Mlp, 2, 33),
        (Family::Mlp, Family::Kan, 2, 34),
        (Family::Kan, Family::Mlp, 3, 35),
    ];
    for (enc, dec, degree, seed) in cases {
        let plan = tiny_plan(enc, dec, degree);
        let mut state = network::build_from_plan(&plan, seed).unwrap();
        let n = 8;
        let coords = random_coords(1, n, seed + 50);
        // Warm the running statistics once so evaluation-mode
        // normalization is non-trivial.
        {
            let mut tape = pikan_core::tape::Tape::new();
            let fwd = network::tape_forward(
                &mut tape,
                &state,
                coords.view(),
                network::NormMode::Training,
            )
            .unwrap();
            state.update_running_stats(&tape, &fwd, n);
        }
        let sd = network::evaluate_with_derivatives(&state, coords.view()).unwrap();
        for point in 0..n {
            for axis in 0..2 {
                let eval_shift = |h: f64| -> Array1<f64> {
                    let mut shifted = coords.clone();
                    shifted[[0, point, axis]] += h;
                    network::forward(&state, shifted.view())
                        .unwrap()
                        .index_axis(Axis(1), point)
                        .row(0)
                        .to_owned()
                };
                let h1 = 1e-4;
                let (fp1, fm1) = (eval_shift(h1), eval_shift(-h1));
                let h2 = 1e-3;
                let (fp2, f0, fm2) = (eval_shift(h2), eval_shift(0.0), eval_shift(-h2));
                for chan in 0..4 {
                    let a1 = if axis == 0 {
                        sd.ddx[[0, point, chan]]
                    } else {
                        sd.ddy[[0, point, chan]]
                    };
                    let fd1 = (fp1[chan] - fm1[chan]) / (2.0 * h1);
                    assert!(
                        (a1 - fd1).abs() <= 1e-4 * a1.abs().max(fd1.abs()).max(1e-3),
                        "({enc:?},{dec:?},deg {degree}) first derivative: {a1} vs {fd1}"
                    );
                    let a2 = if axis == 0 {
                        sd.ddxx[[0, point, chan]]
                    } else {
                        sd.ddyy[[0, point, chan]]
                    };
                    let fd2 = (fp2[chan] - 2.0 * f0[chan] + fm2[chan]) / (h2 * h2);
                    assert!(
                        (a2 - fd2).abs() <= 1e-3 * a2.abs().max(fd2.abs()).max(1e-2),
                        "({enc:?},{dec:?},deg {degree}) second derivative: {a2} vs {fd2}"
                    );
                }
            }
        }
    }
    assert!(started.elapsed().as_secs_f64() < 30.0, "runtime budget");
    pass(6, "derivative fidelity");
}

#[test]
fn criterion_07_symmetry_properties() {
    let n = 24;
    for variant in Variant::ALL {
        let state = network::build(&chebyshev_config(variant, 2, 0.0625, 5)).unwrap();
        let coords = random_coords(1, n, 17);
        let base = network::forward(&state, coords.view()).unwrap();

        // Permutation equivariance.
        let perm: Vec<usize> = (0..n).map(|i| (i * 5 + 2) % n).collect();
        let mut permuted = coords.clone();
        for (dst, &src) in perm.iter().enumerate() {
            permuted
                .index_axis_mut(Axis(1), dst)
                .assign(&coords.index_axis(Axis(1), src));
        }
        let out = network::forward(&state, permuted.view()).unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            for c in 0..4 {
                assert!(
                    (out[[0, dst, c]] - base[[0, src, c]]).abs() < 1e-6,
                    "{variant:?} permutation equivariance"
                );
            }
        }

        // Duplicate-point invariance of the global feature.
        let mut extended = Array3::zeros((1, n + 1, 2));
        extended.slice_mut(ndarray::s![.., ..n, ..]).assign(&coords);
        extended
            .index_axis_mut(Axis(1), n)
            .assign(&coords.index_axis(Axis(1), 3));
        let out = network::forward(&state, extended.view()).unwrap();
        for i in 0..n {
            for c in 0..4 {
                assert!(
                    (out[[0, i, c]] - base[[0, i, c]]).abs() < 1e-6,
                    "{variant:?} duplicate-point invariance"
                );
            }
        }
    }
    pass(7, "symmetry properties");
}

fn smoke_dataset(m: usize, params: &FluidParams, c: f64) -> Vec<GeometrySample> {
    let counts = CloudCounts {
        n: 256,
        interior: 208,
        boundary: 48,
        outer: 32,
    };
    let sensors = SensorCounts {
        lattice: 8,
        ring: 5,
        surface: 5,
    };
    let case = hydrostatic_case(c);
    let shapes = [Shape::Nonagon, Shape::Octagon, Shape::Heptagon];
    (0..m)
        .map(|i| {
            let spec = GeometrySpec::new(shapes[i % 3], 5.0 + i as f64).unwrap();
            let cloud =
                geometry::build_cloud(&spec, &counts, &sensors, c, 9000 + i as u64).unwrap();
            let fields = case.fields(params, &cloud);
            let obs = observations(&fields, &cloud).unwrap();
            GeometrySample {
                cloud,
                observations: obs,
                sources: None,
            }
        })
        .collect()
}

#[test]
fn criterion_08_desk_scale_training_smoke() {
    let started = Instant::now();
    let mut params = FluidParams::ra1e5();
    params.t_cold = 0.5;
    params.t_ref = 0.5;
    let dataset = smoke_dataset(3, &params, 0.5);
    let net = chebyshev_config(Variant::FullKan, 2, 0.25, 1);
    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 3,
        seed: 1,
        ..TrainConfig::default()
    };
    let (_, history) = trainer::train(&dataset, &cfg, &net, &params).unwrap();
    assert_eq!(history.epochs.len(), 300);
    let first = history.epochs[0].loss.total;
    let best = history.best_loss().unwrap();
    println!(
        "training smoke: epoch-1 loss {first:.3e}, best {best:.3e} at epoch {}",
        history.best_epoch().unwrap()
    );
    assert!(
        best <= 0.1 * first,
        "best loss {best} did not reach 10% of the first-epoch loss {first}"
    );
    // Monotone checkpoint: the running best never increases.
    let mut running = f64::INFINITY;
    for rec in &history.epochs {
        running = running.min(rec.loss.total);
        assert!(running <= rec.loss.total);
    }
    assert_eq!(best, running);
    // Loss components are non-negative and sum to the total.
    for rec in &history.epochs {
        assert!(rec.loss.components().iter().all(|&c| c >= 0.0));
        assert!((rec.loss.components().iter().sum::<f64>() - rec.loss.total).abs() < 1e-10);
    }

    // Deterministic reruns of the identical protocol (shortened budget).
    let short = TrainConfig {
        epochs: 10,
        batch_size: 3,
        seed: 1,
        ..TrainConfig::default()
    };
    let (sa, ha) = trainer::train(&dataset, &short, &net, &params).unwrap();
    let (sb, hb) = trainer::train(&dataset, &short, &net, &params).unwrap();
    assert_eq!(sa, sb, "network states differ between identical runs");
    let ta: Vec<f64> = ha.epochs.iter().map(|r| r.loss.total).collect();
    let tb: Vec<f64> = hb.epochs.iter().map(|r| r.loss.total).collect();
    assert_eq!(ta, tb, "loss sequences differ between identical runs");

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "training smoke took {elapsed:.0} s");
    pass(8, "desk-scale training smoke test");
}

#[test]
fn criterion_09_error_table_structure_for_external_reproduction() {
    // The published error magnitudes require the original solver's ground
    // truth and full-scale training; they are not asserted here. What is
    // asserted: the artifact emits error tables in exactly the published
    // row structure, so externally supplied solver fields can be scored.
    let mut params = FluidParams::ra1e5();
    params.t_cold = 0.5;
    params.t_ref = 0.5;
    let dataset = smoke_dataset(2, &params, 0.5);
    let trig = trigonometric_case();
    let adapter = DirectFieldAdapter {
        case: &trig,
        params: &params,
    };
    let data: Vec<_> = dataset
        .iter()
        .map(|s| (s.cloud.clone(), trig.fields(&params, &s.cloud)))
        .collect();
    let table = trainer::error_table(&adapter, &data).unwrap();
    let json = serde_json::to_value(&table).unwrap();
    let rows = ["u_domain", "v_domain", "p_domain", "t_domain", "t_surface"];
    let obj = json.as_object().unwrap();
    assert_eq!(obj.len(), rows.len());
    for row in rows {
        let stats = obj
            .get(row)
            .unwrap_or_else(|| panic!("missing row {row}"))
            .as_object()
            .unwrap();
        for stat in ["average", "maximum", "minimum"] {
            assert!(stats.contains_key(stat), "row {row} missing {stat}");
        }
    }
    println!(
        "note: published benchmark error magnitudes (e.g. average surface-temperature \
         relative error ~5.03e-3) require the original finite-element ground truth and \
         full-scale training (135 geometries x 2500 epochs); they are reproduction \
         targets for externally supplied solver data, not assertions of this suite"
    );
    pass(9, "error-table structure for external reproduction");
}

#[test]
fn criterion_10_mlp_output_bound_property() {
    let mlp = network::build(&chebyshev_config(Variant::FullMlp, 2, 0.0625, 3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..5 {
        let coords = Array3::from_shape_fn((1, 64, 2), |_| rng.random_range(-50.0..50.0));
        let out = network::forward(&mlp, coords.view()).unwrap();
        assert!(
            out.iter().all(|&v| v > -1.0 && v < 1.0),
            "trial {trial}: tanh-terminated output left (-1, 1)"
        );
    }

    // A KAN output escapes the unit interval for suitable coefficients.
    let mut kan = network::build(&chebyshev_config(Variant::FullKan, 2, 0.0625, 3)).unwrap();
    if let network::LayerWeights::Kan(st) = &mut kan.decoder.last_mut().unwrap().weights {
        st.coefficients.fill(0.0);
        st.coefficients[[0, 0, 0]] = 10.0;
    }
    let coords = random_coords(1, 16, 9);
    let out = network::forward(&kan, coords.view()).unwrap();
    assert!(
        out.iter().any(|&v| v.abs() > 1.0),
        "KAN output should admit magnitudes above 1"
    );
    pass(10, "output-range properties");
}
