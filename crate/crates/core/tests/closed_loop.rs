use nalgebra::{DMatrix, DVector, Matrix4, RowVector4, Vector4};
use proptest::prelude::*;

use sea_control::brunovsky::{build_canonical, canonical_command, place_poles, transform_disturbance, GammaEstimates};
use sea_control::controller::{joint_state, DEFAULT_POLES};
use sea_control::dob::DobState;
use sea_control::integrate::rk4_step;
use sea_control::lyapunov::{solve_lyapunov, ultimate_bound_estimate};
use sea_control::trajectory::Trajectory;
use sea_control::{ControlMode, Controller, ControllerConfig, ForceGains, JointController, JointParams, NominalModel};

fn params() -> JointParams {
    JointParams {
        motor_inertia: 0.05,
        link_inertia: 0.2,
        motor_damping: 0.01,
        link_damping: 0.02,
        stiffness: 500.0,
    }
}

fn params_strategy() -> impl Strategy<Value = JointParams> {
    (0.01f64..1.0, 0.01f64..5.0, 0.0f64..0.5, 0.0f64..0.5, 10.0f64..2000.0).prop_map(|(j, m, bj, bm, k)| {
        JointParams {
            motor_inertia: j,
            link_inertia: m,
            motor_damping: bj,
            link_damping: bm,
            stiffness: k,
        }
    })
}

/// Disturbance with `τ⃛ = 0` on the motor and link channels, and its
/// derivatives.
fn disturbance(t: f64) -> [Vector4<f64>; 3] {
    [
        Vector4::new(0.0, 1.5 - 0.4 * t + 0.3 * t * t, 0.0, -0.8 + 0.5 * t),
        Vector4::new(0.0, -0.4 + 0.6 * t, 0.0, 0.5),
        Vector4::new(0.0, 0.6, 0.0, 0.0),
    ]
}

#[test]
fn tracking_error_follows_matrix_exponential_with_exact_estimates() {
    let model = NominalModel::new(params(), 0).unwrap();
    let canon = build_canonical(&model).unwrap();
    let k = place_poles(&canon, &DEFAULT_POLES).unwrap();
    let a_cl = canon.closed_loop(&k);
    let scale = canon.q[2];
    let reference = Trajectory::Sine {
        amplitude: 0.3,
        frequency: 0.8,
        phase: 0.2,
        offset: 0.1,
    };
    let y_ref = |t: f64| reference.eval(t).map(|v| v * scale);
    let gamma = |t: f64| {
        let [d, dd, ddd] = disturbance(t);
        transform_disturbance(&d, &dd, &ddd, &canon)
    };
    let error = |t: f64, x: &Vector4<f64>| {
        canon.to_canonical(x) - canonical_command(x, &y_ref(t), &k, &canon, gamma(t)).xi_ref
    };

    let mut x = Vector4::new(0.02, -0.1, 0.0, 0.3);
    let e0 = error(0.0, &x);
    let dt = 1e-4;
    for step in 0..10_000 {
        let next = rk4_step(step as f64 * dt, x.as_slice(), dt, |t, y| {
            let x = Vector4::from_column_slice(y);
            let u = canonical_command(&x, &y_ref(t), &k, &canon, gamma(t)).v;
            Ok((model.drift(&x, u) - disturbance(t)[0]).iter().copied().collect())
        })
        .unwrap();
        x = Vector4::from_column_slice(&next);
        let t = (step + 1) as f64 * dt;
        if (step + 1) % 500 == 0 {
            let expected = (a_cl * t).exp() * e0;
            let diff = (error(t, &x) - expected).amax();
            assert!(diff < 1e-8 * e0.amax().max(1.0), "t = {t}: {diff}");
        }
    }
}

#[test]
fn both_representations_advance_identically() {
    let model = NominalModel::new(params(), 0).unwrap();
    let canon = build_canonical(&model).unwrap();
    let x0 = Vector4::new(0.1, -0.2, 0.05, 0.4);
    let u = |t: f64| 2.0 * (5.0 * t).cos();
    let dt = 1e-3;
    let x1 = rk4_step(0.0, x0.as_slice(), dt, |t, y| {
        let x = Vector4::from_column_slice(y);
        Ok((model.drift(&x, u(t)) - disturbance(t)[0]).iter().copied().collect())
    })
    .unwrap();
    let xi0 = canon.to_canonical(&x0);
    let xi1 = rk4_step(0.0, xi0.as_slice(), dt, |t, y| {
        let xi = Vector4::from_column_slice(y);
        let gamma = canon.t * disturbance(t)[0];
        Ok((canon.lambda * xi + canon.beta * u(t) - gamma).iter().copied().collect())
    })
    .unwrap();
    let mapped = canon.t * Vector4::from_column_slice(&x1);
    let diff = (mapped - Vector4::from_column_slice(&xi1)).amax();
    assert!(diff < 1e-10 * mapped.amax().max(1.0), "{diff}");
}

/// Closed loop of one nominal joint with the full observer in the loop.
fn regulate(params: JointParams, bandwidth: f64, tau: Vector4<f64>, target: f64, seconds: f64) -> Vector4<f64> {
    let joint = JointController::new(
        0,
        params,
        ControlMode::Position(Trajectory::Constant { value: target }),
        bandwidth,
        &DEFAULT_POLES,
        ForceGains::default(),
    )
    .unwrap();
    let x0 = Vector4::zeros();
    let mut y: Vec<f64> = x0.iter().copied().chain(DobState::initial(&x0, &joint.gains).as_array()).collect();
    let dt = 1e-4;
    for step in 0..(seconds / dt).round() as usize {
        y = rk4_step(step as f64 * dt, &y, dt, |t, y| {
            let x = Vector4::from_column_slice(&y[..4]);
            let dob = DobState::from_slice(&y[4..]);
            let u = joint.step(&x, t, &dob)?.u;
            let xdot = joint.model.drift(&x, u) - tau;
            let zdot = joint.observer_rate(&dob, &x, u)?;
            Ok(xdot.iter().copied().chain(zdot.as_array()).collect())
        })
        .unwrap();
    }
    Vector4::from_column_slice(&y[..4])
}

#[test]
fn constant_disturbances_are_rejected() {
    let tau = Vector4::new(0.0, 40.0, 0.0, -12.0);
    let x = regulate(params(), 300.0, tau, 0.4, 3.0);
    assert!((x[2] - 0.4).abs() < 1e-6, "link at {}", x[2]);
    assert!(x[3].abs() < 1e-5);
}

#[test]
fn biased_estimate_stays_inside_ultimate_bound() {
    let model = NominalModel::new(params(), 0).unwrap();
    let canon = build_canonical(&model).unwrap();
    let k = place_poles(&canon, &DEFAULT_POLES).unwrap();
    let a_cl = canon.closed_loop(&k);
    let cert = solve_lyapunov(&DMatrix::from_iterator(4, 4, a_cl.iter().copied()), &DMatrix::identity(4, 4)).unwrap();
    let tau = Vector4::new(0.0, 3.0, 0.0, -2.0);
    let gamma_hat = GammaEstimates {
        value: canon.t * Vector4::new(0.0, 3.5, 0.0, -2.3),
        ..Default::default()
    };
    let bias = (gamma_hat.value - canon.t * tau).norm();
    let radius = ultimate_bound_estimate(&cert, bias);
    let y_ref = [0.1 * canon.q[2], 0.0, 0.0, 0.0, 0.0];
    let mut x = Vector4::new(0.3, 0.0, 0.3, 0.0);
    let dt = 1e-4;
    for step in 0..20_000 {
        let next = rk4_step(step as f64 * dt, x.as_slice(), dt, |_, y| {
            let x = Vector4::from_column_slice(y);
            let u = canonical_command(&x, &y_ref, &k, &canon, gamma_hat).v;
            Ok((model.drift(&x, u) - tau).iter().copied().collect())
        })
        .unwrap();
        x = Vector4::from_column_slice(&next);
    }
    let refs = canonical_command(&x, &y_ref, &k, &canon, gamma_hat);
    let e = canon.to_canonical(&x) - refs.xi_ref;
    assert!(e.norm() > 0.0);
    assert!(e.norm() <= radius, "{} > {radius}", e.norm());
}

#[test]
fn lyapunov_function_never_increases_with_exact_estimates() {
    let model = NominalModel::new(params(), 0).unwrap();
    let canon = build_canonical(&model).unwrap();
    let k = place_poles(&canon, &DEFAULT_POLES).unwrap();
    let a_cl = canon.closed_loop(&k);
    let cert = solve_lyapunov(&DMatrix::from_iterator(4, 4, a_cl.iter().copied()), &DMatrix::identity(4, 4)).unwrap();
    let gamma = GammaEstimates {
        value: canon.t * disturbance(0.0)[0],
        ..Default::default()
    };
    let y_ref = [0.0; 5];
    let mut x = Vector4::new(-0.2, 1.0, 0.1, -0.5);
    let v = |x: &Vector4<f64>| {
        let e = canon.to_canonical(x) - canonical_command(x, &y_ref, &k, &canon, gamma).xi_ref;
        cert.value(&DVector::from_column_slice(e.as_slice()))
    };
    let mut last = v(&x);
    let dt = 1e-4;
    for step in 0..10_000 {
        let next = rk4_step(step as f64 * dt, x.as_slice(), dt, |_, y| {
            let x = Vector4::from_column_slice(y);
            let u = canonical_command(&x, &y_ref, &k, &canon, gamma).v;
            Ok((model.drift(&x, u) - disturbance(0.0)[0]).iter().copied().collect())
        })
        .unwrap();
        x = Vector4::from_column_slice(&next);
        let now = v(&x);
        assert!(now <= last * (1.0 + 1e-12), "V rose at step {step}: {last} -> {now}");
        last = now;
    }
}

fn config(bandwidth: Vec<f64>) -> ControllerConfig {
    ControllerConfig {
        dob_bandwidth: bandwidth,
        poles: DEFAULT_POLES,
        force_gains: ForceGains::default(),
        torque_limit: None,
    }
}

fn permute<T: Clone>(v: &[T], order: &[usize]) -> Vec<T> {
    order.iter().map(|&i| v[i].clone()).collect()
}

fn modes() -> Vec<ControlMode> {
    vec![
        ControlMode::Position(Trajectory::Sine {
            amplitude: 0.2,
            frequency: 1.0,
            phase: 0.0,
            offset: 0.1,
        }),
        ControlMode::Force(Trajectory::Constant { value: 2.0 }),
        ControlMode::Position(Trajectory::Constant { value: -0.3 }),
    ]
}

#[test]
fn joint_order_does_not_change_commands() {
    let nominal: Vec<JointParams> = [0.3, 0.1, 0.02]
        .iter()
        .map(|&m| JointParams {
            link_inertia: m,
            ..params()
        })
        .collect();
    let config = config(vec![500.0, 800.0, 1200.0]);
    let states = vec![
        joint_state(0.1, 0.2, 0.05, -0.1),
        joint_state(-0.2, 0.0, -0.21, 0.3),
        joint_state(0.4, -0.5, 0.38, 0.1),
    ];
    let mut forward = Controller::new(&nominal, &modes(), &config, &states).unwrap();
    let order = [2, 0, 1];
    let mut shuffled = Controller::new(
        &permute(&nominal, &order),
        &permute(&modes(), &order),
        &ControllerConfig {
            dob_bandwidth: permute(&config.dob_bandwidth, &order),
            ..config.clone()
        },
        &permute(&states, &order),
    )
    .unwrap();
    let mut xs = states.clone();
    for step in 1..=50 {
        let t = step as f64 * 1e-3;
        for (i, x) in xs.iter_mut().enumerate() {
            *x += Vector4::new(1e-4, (i as f64 + 1.0) * 1e-3, -2e-4, 5e-4);
        }
        let a = forward.advance(t, &xs, 1e-3).unwrap();
        let b = shuffled.advance(t, &permute(&xs, &order), 1e-3).unwrap();
        for (slot, &joint) in order.iter().enumerate() {
            assert_eq!(a[joint].u.to_bits(), b[slot].u.to_bits(), "joint {joint} at step {step}");
        }
    }
}

#[test]
fn other_joints_do_not_influence_a_command() {
    let nominal = vec![params(); 3];
    let config = config(vec![400.0; 3]);
    let states = vec![joint_state(0.1, 0.0, 0.1, 0.0); 3];
    let base = Controller::new(&nominal, &modes(), &config, &states).unwrap();
    let mut disturbed = states.clone();
    disturbed[1] = joint_state(0.7, -3.0, 0.5, 2.0);
    disturbed[2] = joint_state(-0.4, 1.0, -0.2, 0.0);
    let a = base.evaluate(0.3, &states, base.observers()).unwrap();
    let b = base.evaluate(0.3, &disturbed, base.observers()).unwrap();
    assert_eq!(a[0].u.to_bits(), b[0].u.to_bits());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn canonical_transform_structure(p in params_strategy()) {
        let model = NominalModel::new(p, 0).unwrap();
        let canon = build_canonical(&model).unwrap();
        let scale = p.link_inertia * p.motor_inertia / p.stiffness;
        prop_assert!((canon.q - RowVector4::new(0.0, 0.0, scale, 0.0)).amax() < 1e-10 * scale.max(1.0));
        prop_assert!((canon.t * model.b - Vector4::new(0.0, 0.0, 0.0, 1.0)).amax() < 1e-12);
        let lambda = canon.t * model.a * canon.t_inv;
        let mut shift = Matrix4::zeros();
        shift[(0, 1)] = 1.0;
        shift[(1, 2)] = 1.0;
        shift[(2, 3)] = 1.0;
        for r in 0..3 {
            prop_assert!((lambda.row(r) - shift.row(r)).amax() < 1e-10);
        }
        let trace = -p.motor_damping / p.motor_inertia - p.link_damping / p.link_inertia;
        prop_assert!((canon.a[3] - trace).abs() < 1e-10 * trace.abs().max(1.0));
    }

    #[test]
    fn canonical_output_is_scaled_link_angle(
        p in params_strategy(),
        x in prop::array::uniform4(-3.0f64..3.0),
    ) {
        let model = NominalModel::new(p, 0).unwrap();
        let canon = build_canonical(&model).unwrap();
        let x = Vector4::from(x);
        let xi1 = canon.to_canonical(&x)[0];
        let expected = p.link_inertia * p.motor_inertia / p.stiffness * x[2];
        prop_assert!((xi1 - expected).abs() < 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn placed_poles_are_closed_loop_eigenvalues(
        p in params_strategy(),
        poles in prop::array::uniform4(-60.0f64..-5.0),
    ) {
        let canon = build_canonical(&NominalModel::new(p, 0).unwrap()).unwrap();
        let k = place_poles(&canon, &poles).unwrap();
        let a_cl = canon.closed_loop(&k);
        let cert = solve_lyapunov(&DMatrix::from_iterator(4, 4, a_cl.iter().copied()), &DMatrix::identity(4, 4));
        prop_assert!(cert.is_ok());
        // characteristic polynomial evaluated at each requested pole
        for &s in &poles {
            let det = (Matrix4::identity() * s - a_cl).determinant();
            let scale: f64 = poles.iter().map(|p| (s - p).abs().max(1.0)).product();
            prop_assert!(det.abs() < 1e-8 * scale, "det at {s}: {det}");
        }
    }
}
