//! Fixed-step simulation of the plant, the observers and the control laws.
//!
//! Plant and observer states are integrated together with classical RK4. The
//! control law is a static function of the measured state and the observer
//! state, so it is evaluated at every stage and the closed loop is integrated
//! as one ODE. Measurement noise and payload events are sampled at grid
//! points and held over the step; events take effect at the first grid point
//! at or after their time.

use nalgebra::Vector4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::controller::{joint_state, ControlMode, Controller};
use crate::dob::DobState;
use crate::error::{Error, Result};
use crate::integrate::rk4_step;
use crate::lyapunov::LyapunovCertificate;
use crate::model::JointVector;
use crate::plant::{plant_derivative, true_disturbance, RobotState};
use crate::scenario::Scenario;

/// States beyond this magnitude are treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// One joint at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointSample {
    pub q_j: f64,
    pub dq_j: f64,
    pub q_m: f64,
    pub dq_m: f64,
    pub u: f64,
    /// `k_n (q_J - q_m)`.
    pub spring_torque: f64,
    /// Desired link angle or spring torque.
    pub reference: f64,
    /// Tracking error in the units of `reference`.
    pub error: f64,
    /// Observer estimate of the lumped disturbance, rows 2 and 4.
    pub dist_hat_motor: f64,
    pub dist_hat_link: f64,
    /// Ground-truth lumped disturbance, rows 2 and 4.
    pub dist_true_motor: f64,
    pub dist_true_link: f64,
    pub contact: bool,
    /// `‖ẋ_true - (A x + b u - τ_dis)‖∞` for this joint.
    pub oracle_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Telemetry {
    pub joints: usize,
    pub time: Vec<f64>,
    /// Row-major: `samples[k * joints + i]`.
    pub samples: Vec<JointSample>,
}

impl Telemetry {
    pub fn rows(&self) -> usize {
        self.time.len()
    }

    pub fn sample(&self, row: usize, joint: usize) -> &JointSample {
        &self.samples[row * self.joints + joint]
    }

    pub fn joint_series(&self, joint: usize) -> impl Iterator<Item = &JointSample> + '_ {
        self.samples.iter().skip(joint).step_by(self.joints)
    }

    pub fn last(&self, joint: usize) -> &JointSample {
        self.sample(self.rows() - 1, joint)
    }

    /// Largest oracle residual over all joints and steps.
    pub fn max_oracle_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.oracle_residual).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateSummary {
    pub residual_norm: f64,
    pub p_min_eig: f64,
    pub p_norm: f64,
    pub valid: bool,
}

impl From<&LyapunovCertificate> for CertificateSummary {
    fn from(c: &LyapunovCertificate) -> Self {
        Self {
            residual_norm: c.residual_norm,
            p_min_eig: c.p_min_eig,
            p_norm: c.p_norm(),
            valid: c.is_valid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointMetrics {
    pub joint: usize,
    pub mode: &'static str,
    /// RMS tracking error after the transient window.
    pub rms_error: f64,
    pub max_abs_error: f64,
    /// Worst settling time over all events; `None` if some event never settles.
    pub settling_time: Option<f64>,
    /// Settling time after each event, in event order.
    pub event_settling: Vec<(f64, Option<f64>)>,
    /// Largest absolute error in the final window.
    pub steady_state_error: f64,
    /// Peak-to-peak error in the final window.
    pub steady_state_peak_to_peak: f64,
    /// `|k_n (q_J - q_m) - τ_des|` at the end of the run, force mode only.
    pub force_error: Option<f64>,
    pub certificate: CertificateSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub scenario: String,
    pub steps: usize,
    pub max_oracle_residual: f64,
    pub joints: Vec<JointMetrics>,
}

/// Time from `event` until `|error|` stays below `band` up to `until`.
/// `None` when the error is still outside the band at the end of the window.
pub fn settling_time(time: &[f64], error: &[f64], band: f64, event: f64, until: f64) -> Option<f64> {
    let mut settled_at = None;
    for (&t, &e) in time.iter().zip(error) {
        if t < event {
            continue;
        }
        if t > until {
            break;
        }
        if e.abs() < band {
            settled_at.get_or_insert(t);
        } else {
            settled_at = None;
        }
    }
    settled_at.map(|t| t - event)
}

fn state_from(flat: &[f64], n: usize, t: f64) -> (RobotState, Vec<DobState>) {
    let state = RobotState::from_flat(&flat[..4 * n], t);
    let obs = flat[4 * n..].chunks(12).map(DobState::from_slice).collect();
    (state, obs)
}

struct Simulation<'a> {
    scenario: &'a Scenario,
    world: crate::plant::World,
    controller: Controller,
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
}

impl Simulation<'_> {
    fn measure(&mut self, state: &RobotState) -> Vec<JointVector> {
        let n = state.joints();
        (0..n)
            .map(|i| {
                let x = state.joint(i);
                match &mut self.noise {
                    Some((rng, dist)) => x + Vector4::from_fn(|_, _| dist.sample(rng)),
                    None => x,
                }
            })
            .collect()
    }
}

fn check_bounded(state: &RobotState) -> Result<()> {
    state.check_finite()?;
    for i in 0..state.joints() {
        if state.joint(i).amax() > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                joint: i,
                time: state.t,
            });
        }
    }
    Ok(())
}

/// Runs a scenario to completion.
pub fn run(scenario: &Scenario) -> Result<(Telemetry, Metrics)> {
    scenario.validate()?;
    let n = scenario.joints();
    let dt = scenario.dt;
    let steps = scenario.steps();
    let world = scenario.world();

    let mut state = RobotState::at_rest(&scenario.initial_angles);
    let initial: Vec<JointVector> = (0..n).map(|i| state.joint(i)).collect();
    let controller = Controller::new(
        &scenario.nominal,
        &scenario.modes,
        &scenario.controller_config(),
        &initial,
    )?;
    let noise = (scenario.measurement_noise > 0.0).then(|| {
        (
            ChaCha8Rng::seed_from_u64(scenario.seed),
            Normal::new(0.0, scenario.measurement_noise).expect("validated noise level"),
        )
    });
    let mut sim = Simulation {
        scenario,
        world,
        controller,
        noise,
    };

    let mut telemetry = Telemetry {
        joints: n,
        time: Vec::with_capacity(steps + 1),
        samples: Vec::with_capacity((steps + 1) * n),
    };

    for k in 0..=steps {
        let t = k as f64 * dt;
        state.t = t;
        check_bounded(&state)?;
        let payloads = sim.world.payloads_at(t);
        let xs = sim.measure(&state);
        let commands = sim.controller.command(t, &xs)?;
        let u: Vec<f64> = commands.iter().map(|c| c.u).collect();

        let truth = true_disturbance(&state, &u, &sim.world, &payloads, &sim.scenario.nominal)?;
        let derivative = plant_derivative(&state, &u, &sim.world, &payloads)?;
        telemetry.time.push(t);
        for i in 0..n {
            let joint = &sim.controller.joints()[i];
            let x = state.joint(i);
            let xdot = derivative.joint(i);
            let residual = (xdot - joint.model.drift(&x, u[i]) + truth[i].lumped).amax();
            let p = &sim.scenario.nominal[i];
            let spring = p.stiffness * (x[0] - x[2]);
            let cmd = &commands[i];
            let error = match sim.scenario.modes[i] {
                ControlMode::Position(_) => x[2] - cmd.reference,
                ControlMode::Force(_) => spring - cmd.reference,
            };
            telemetry.samples.push(JointSample {
                q_j: x[0],
                dq_j: x[1],
                q_m: x[2],
                dq_m: x[3],
                u: cmd.u,
                spring_torque: spring,
                reference: cmd.reference,
                error,
                dist_hat_motor: cmd.estimate.tau[1],
                dist_hat_link: cmd.estimate.tau[3],
                dist_true_motor: truth[i].lumped[1],
                dist_true_link: truth[i].lumped[3],
                contact: sim.world.environment.in_contact(i, x[2]),
                oracle_residual: residual,
            });
        }
        if k == steps {
            break;
        }

        // measurement offsets are held over the step
        let offsets: Vec<JointVector> = (0..n).map(|i| xs[i] - state.joint(i)).collect();
        let mut y = state.flatten();
        y.extend(sim.controller.observers().iter().flat_map(|o| o.as_array()));
        let controller = &sim.controller;
        let world = &sim.world;
        let next = rk4_step(t, &y, dt, |s, y| {
            let (stage, obs) = state_from(y, n, s);
            let xs: Vec<JointVector> = (0..n).map(|i| stage.joint(i) + offsets[i]).collect();
            let u: Vec<f64> = controller.evaluate(s, &xs, &obs)?.iter().map(|c| c.u).collect();
            let mut rate = plant_derivative(&stage, &u, world, &payloads)?.flatten();
            let obs_rate = controller.observer_rates(&obs, &xs, &u).map_err(|e| match e {
                Error::Joint { joint, .. } | Error::Divergence { joint, .. } => {
                    Error::Divergence { joint, time: s }
                }
                e => e,
            })?;
            rate.extend(obs_rate.iter().flat_map(|r| r.as_array()));
            Ok(rate)
        })?;
        let (next_state, obs) = state_from(&next, n, t + dt);
        state = next_state;
        sim.controller.set_observers(obs);
    }

    let metrics = compute_metrics(scenario, &telemetry, sim.controller.certificates());
    Ok((telemetry, metrics))
}

/// Synthesizes every joint's controller without simulating and returns the
/// gain certificates in joint order.
pub fn certify(scenario: &Scenario) -> Result<Vec<LyapunovCertificate>> {
    scenario.validate()?;
    let state = RobotState::at_rest(&scenario.initial_angles);
    let initial: Vec<JointVector> = (0..scenario.joints()).map(|i| state.joint(i)).collect();
    let controller = Controller::new(&scenario.nominal, &scenario.modes, &scenario.controller_config(), &initial)?;
    Ok(controller.certificates().into_iter().cloned().collect())
}

pub fn compute_metrics(
    scenario: &Scenario,
    telemetry: &Telemetry,
    certificates: Vec<&LyapunovCertificate>,
) -> Metrics {
    let cfg = &scenario.metrics;
    let end = *telemetry.time.last().unwrap_or(&0.0);
    let joints = (0..telemetry.joints)
        .map(|i| {
            let error: Vec<f64> = telemetry.joint_series(i).map(|s| s.error).collect();
            let post: Vec<f64> = telemetry
                .time
                .iter()
                .zip(&error)
                .filter(|(t, _)| **t >= cfg.transient)
                .map(|(_, e)| *e)
                .collect();
            let rms_error = if post.is_empty() {
                0.0
            } else {
                (post.iter().map(|e| e * e).sum::<f64>() / post.len() as f64).sqrt()
            };
            let max_abs_error = post.iter().fold(0.0f64, |m, e| m.max(e.abs()));

            let mut events = vec![0.0];
            events.extend(scenario.event_times(i).into_iter().filter(|&t| t > 0.0 && t <= end));
            events.dedup();
            let event_settling: Vec<(f64, Option<f64>)> = events
                .iter()
                .enumerate()
                .map(|(k, &te)| {
                    let until = events.get(k + 1).copied().unwrap_or(f64::INFINITY);
                    // the window closes just before the next event
                    let until = if until.is_finite() { until - 0.5 * scenario.dt } else { end };
                    (te, settling_time(&telemetry.time, &error, cfg.band, te, until))
                })
                .collect();
            let settling_time = event_settling
                .iter()
                .try_fold(0.0f64, |m, (_, s)| s.map(|s| m.max(s)));

            let window: Vec<f64> = telemetry
                .time
                .iter()
                .zip(&error)
                .filter(|(t, _)| **t >= end - cfg.steady_window)
                .map(|(_, e)| *e)
                .collect();
            let steady_state_error = window.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            let (lo, hi) = window
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(*e), hi.max(*e)));
            let steady_state_peak_to_peak = if window.is_empty() { 0.0 } else { hi - lo };
            let mode = &scenario.modes[i];
            let force_error = matches!(mode, ControlMode::Force(_))
                .then(|| error.last().map_or(0.0, |e| e.abs()));
            JointMetrics {
                joint: i,
                mode: mode.name(),
                rms_error,
                max_abs_error,
                settling_time,
                event_settling,
                steady_state_error,
                steady_state_peak_to_peak,
                force_error,
                certificate: certificates[i].into(),
            }
        })
        .collect();
    Metrics {
        scenario: scenario.name.clone(),
        steps: telemetry.rows().saturating_sub(1),
        max_oracle_residual: telemetry.max_oracle_residual(),
        joints,
    }
}

/// Builds the measured joint vector of a sample.
pub fn sample_state(s: &JointSample) -> JointVector {
    joint_state(s.q_j, s.dq_j, s.q_m, s.dq_m)
}
