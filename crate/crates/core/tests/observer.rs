use nalgebra::Vector4;

use sea_control::dob::{dob_derivative, extract_estimates, place_dob_poles, DisturbanceEstimate, DobGains, DobState};
use sea_control::integrate::rk4_step;
use sea_control::{JointParams, NominalModel};

fn joint() -> NominalModel {
    NominalModel::new(
        JointParams {
            motor_inertia: 0.05,
            link_inertia: 0.3,
            motor_damping: 0.02,
            link_damping: 0.01,
            stiffness: 400.0,
        },
        0,
    )
    .unwrap()
}

/// Simulates one joint driven by `u(t)` and disturbed by `tau(t)` with its
/// derivatives, and returns the estimation error after each step.
fn estimation_errors(
    gains: DobGains,
    u: impl Fn(f64) -> f64,
    tau: impl Fn(f64) -> DisturbanceEstimate,
    dt: f64,
    steps: usize,
) -> Vec<(f64, DisturbanceEstimate)> {
    let model = joint();
    let x0 = Vector4::new(0.01, 0.0, 0.0, 0.0);
    let mut y: Vec<f64> = x0.iter().copied().chain(DobState::initial(&x0, &gains).as_array()).collect();
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        y = rk4_step(k as f64 * dt, &y, dt, |s, y| {
            let x = Vector4::from_column_slice(&y[..4]);
            let xdot = model.drift(&x, u(s)) - tau(s).tau;
            let zdot = dob_derivative(&DobState::from_slice(&y[4..]), &x, u(s), &model, &gains)?;
            Ok(xdot.iter().copied().chain(zdot.as_array()).collect())
        })
        .unwrap();
        let t = (k + 1) as f64 * dt;
        let est = extract_estimates(&DobState::from_slice(&y[4..]), &Vector4::from_column_slice(&y[..4]), &gains);
        let truth = tau(t);
        out.push((
            t,
            DisturbanceEstimate {
                tau: est.tau - truth.tau,
                rate: est.rate - truth.rate,
                accel: est.accel - truth.accel,
            },
        ));
    }
    out
}

fn worst(e: &DisturbanceEstimate) -> f64 {
    e.tau.amax().max(e.rate.amax()).max(e.accel.amax())
}

fn polynomial(c: [f64; 3], dir: Vector4<f64>) -> impl Fn(f64) -> DisturbanceEstimate {
    move |t| DisturbanceEstimate {
        tau: dir * (c[0] + c[1] * t + c[2] * t * t),
        rate: dir * (c[1] + 2.0 * c[2] * t),
        accel: dir * (2.0 * c[2]),
    }
}

#[test]
fn constant_disturbance_recovered_within_two_tenths_of_a_second() {
    let gains = DobGains::new(300.0, 3e4, 1e6).unwrap();
    let errors = estimation_errors(
        gains,
        |t| (3.0 * t).sin(),
        polynomial([1.7, 0.0, 0.0], Vector4::new(0.0, 1.0, 0.0, -0.4)),
        1e-4,
        2_500,
    );
    for (t, e) in &errors {
        if *t >= 0.2 {
            assert!(e.tau.amax() < 1e-6, "t = {t}: {}", e.tau.amax());
        }
    }
}

#[test]
fn polynomial_disturbances_of_degree_up_to_two_are_tracked_exactly() {
    let gains = place_dob_poles(200.0).unwrap();
    let dir = Vector4::new(0.3, 1.0, -0.2, 0.5);
    for c in [[2.0, 0.0, 0.0], [0.5, -3.0, 0.0], [0.1, 0.4, 5.0]] {
        let errors = estimation_errors(gains, |t| 0.2 * t, polynomial(c, dir), 1e-4, 5_000);
        let (_, last) = errors.last().unwrap();
        assert!(worst(last) < 1e-6, "coefficients {c:?}: error {}", worst(last));
    }
}

#[test]
fn sinusoid_error_amplitude_matches_transfer_function() {
    let g = 100.0;
    let gains = place_dob_poles(g).unwrap();
    let dt = 1e-5;
    for ratio in [0.1, 0.5, 1.0, 3.0] {
        let omega = ratio * g;
        let period = 2.0 * std::f64::consts::PI / omega;
        let settle = 40.0 / g;
        let steps = ((settle + 3.0 * period) / dt).round() as usize;
        let dir = Vector4::new(0.0, 1.0, 0.0, 0.0);
        let errors = estimation_errors(
            gains,
            |_| 0.0,
            |t| DisturbanceEstimate {
                tau: dir * (omega * t).sin(),
                rate: dir * omega * (omega * t).cos(),
                accel: dir * -omega * omega * (omega * t).sin(),
            },
            dt,
            steps,
        );
        let amplitude = errors
            .iter()
            .filter(|(t, _)| *t >= settle)
            .fold(0.0f64, |m, (_, e)| m.max(e.tau.amax()));
        let expected = gains.error_gain(omega);
        assert!(
            ((amplitude - expected) / expected).abs() < 0.05,
            "ω/g = {ratio}: {amplitude} vs {expected}"
        );
    }
}

#[test]
fn estimation_error_does_not_depend_on_input() {
    let gains = place_dob_poles(150.0).unwrap();
    let tau = |t: f64| DisturbanceEstimate {
        tau: Vector4::new(0.0, (2.0 * t).cos(), 0.0, 0.3 * t),
        rate: Vector4::new(0.0, -2.0 * (2.0 * t).sin(), 0.0, 0.3),
        accel: Vector4::new(0.0, -4.0 * (2.0 * t).cos(), 0.0, 0.0),
    };
    let quiet = estimation_errors(gains, |_| 0.0, tau, 1e-4, 3_000);
    let driven = estimation_errors(gains, |t| 5.0 * (11.0 * t).sin() + 2.0, tau, 1e-4, 3_000);
    // each derivative order carries one more factor of g in its rounding error
    let g = 150.0;
    for ((_, a), (_, b)) in quiet.iter().zip(&driven) {
        assert!((a.tau - b.tau).amax() < 1e-10);
        assert!((a.rate - b.rate).amax() < 1e-10 * g);
        assert!((a.accel - b.accel).amax() < 1e-10 * g * g);
    }
}
