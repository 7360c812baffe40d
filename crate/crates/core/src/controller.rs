//! Decentralized robust motion controller.
//!
//! Every joint runs its own second-order disturbance observer on its own
//! nominal model. Position mode feeds the observer's estimates through the
//! Brunovsky reference generator and a state-feedback law; force mode turns
//! the spring-torque target into a motor-angle target and closes a
//! compensated PD loop on the motor side.

use nalgebra::{DMatrix, RowVector4, Vector4};
use serde::{Deserialize, Serialize};

use crate::brunovsky::{
    build_canonical, canonical_command, map_input_to_torque, place_poles, transform_disturbance,
    CanonicalModel, OutputReference,
};
use crate::dob::{dob_derivative, extract_estimates, place_dob_poles, DisturbanceEstimate, DobGains, DobState};
use crate::error::{Error, Result};
use crate::integrate::rk4_step;
use crate::lyapunov::{solve_lyapunov, LyapunovCertificate};
use crate::model::{JointParams, JointVector, NominalModel};
use crate::trajectory::Trajectory;

pub const DEFAULT_POLES: [f64; 4] = [-20.0, -25.0, -30.0, -35.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "trajectory", rename_all = "snake_case")]
pub enum ControlMode {
    /// Desired link angle (rad).
    Position(Trajectory),
    /// Desired spring torque `k_n (q_J - q_m)` (N·m).
    Force(Trajectory),
}

impl ControlMode {
    pub fn trajectory(&self) -> &Trajectory {
        match self {
            ControlMode::Position(t) | ControlMode::Force(t) => t,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ControlMode::Position(_) => "position",
            ControlMode::Force(_) => "force",
        }
    }
}

impl Default for ControlMode {
    fn default() -> Self {
        ControlMode::Position(Trajectory::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for ForceGains {
    fn default() -> Self {
        // double pole at -20 rad/s
        Self { kp: 400.0, kd: 40.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub dob_bandwidth: Vec<f64>,
    pub poles: [f64; 4],
    pub force_gains: ForceGains,
    pub torque_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Law {
    Position { gain: RowVector4<f64> },
    Force { gains: ForceGains },
}

/// Synthesized controller of a single joint.
#[derive(Debug, Clone, PartialEq)]
pub struct JointController {
    pub index: usize,
    pub model: NominalModel,
    pub canon: CanonicalModel,
    pub gains: DobGains,
    pub mode: ControlMode,
    pub certificate: LyapunovCertificate,
    law: Law,
}

/// What one joint did at one control instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointCommand {
    pub u: f64,
    /// Desired link angle or spring torque, depending on the mode.
    pub reference: f64,
    pub estimate: DisturbanceEstimate,
}

impl JointController {
    pub fn new(
        index: usize,
        params: JointParams,
        mode: ControlMode,
        dob_bandwidth: f64,
        poles: &[f64; 4],
        force_gains: ForceGains,
    ) -> Result<Self> {
        let model = NominalModel::new(params, index)?;
        let canon = build_canonical(&model)?;
        let gains = place_dob_poles(dob_bandwidth)?;
        let (law, a_cl) = match &mode {
            ControlMode::Position(_) => {
                let gain = place_poles(&canon, poles)?;
                let a_cl = canon.closed_loop(&gain);
                (Law::Position { gain }, DMatrix::from_iterator(4, 4, a_cl.iter().copied()))
            }
            ControlMode::Force(_) => {
                let ForceGains { kp, kd } = force_gains;
                let a_cl = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -kp, -kd]);
                (Law::Force { gains: force_gains }, a_cl)
            }
        };
        let n = a_cl.nrows();
        let certificate = solve_lyapunov(&a_cl, &DMatrix::identity(n, n))?;
        Ok(Self {
            index,
            model,
            canon,
            gains,
            mode,
            certificate,
            law,
        })
    }

    pub fn position_gain(&self) -> Option<RowVector4<f64>> {
        match self.law {
            Law::Position { gain } => Some(gain),
            Law::Force { .. } => None,
        }
    }

    /// Canonical output reference for a desired link trajectory, scaled by
    /// the first row of `T` (`ξ₁ = (m J / k) q_m`).
    pub fn output_reference(&self, link: &[f64; 5]) -> OutputReference {
        let scale = self.canon.q[2];
        link.map(|v| v * scale)
    }

    pub fn step_position(&self, x: &JointVector, t: f64, dob: &DobState) -> Result<JointCommand> {
        let Law::Position { gain } = &self.law else {
            return Err(Error::Synthesis(format!("joint {} is not in position mode", self.index)));
        };
        let desired = self.mode.trajectory().eval(t);
        let est = extract_estimates(dob, x, &self.gains);
        let gamma = transform_disturbance(&est.tau, &est.rate, &est.accel, &self.canon);
        let refs = canonical_command(x, &self.output_reference(&desired), gain, &self.canon, gamma);
        let u = map_input_to_torque(refs.v, &self.canon, &self.model);
        self.finish(u, desired[0], est, t)
    }

    pub fn step_force(&self, x: &JointVector, t: f64, dob: &DobState) -> Result<JointCommand> {
        let Law::Force { gains } = &self.law else {
            return Err(Error::Synthesis(format!("joint {} is not in force mode", self.index)));
        };
        let p = &self.model.params;
        let desired = self.mode.trajectory().eval(t);
        let est = extract_estimates(dob, x, &self.gains);
        // estimated link acceleration from the nominal link row
        let link_accel = (self.model.a.row(3) * x)[0] - est.tau[3];
        let target = x[2] + desired[0] / p.stiffness;
        let target_rate = x[3] + desired[1] / p.stiffness;
        let target_accel = link_accel + desired[2] / p.stiffness;
        let motor_accel =
            target_accel + gains.kd * (target_rate - x[1]) + gains.kp * (target - x[0]);
        let u = p.motor_inertia * (motor_accel + est.tau[1])
            + p.stiffness * (x[0] - x[2])
            + p.motor_damping * x[1];
        self.finish(u, desired[0], est, t)
    }

    fn finish(&self, u: f64, reference: f64, estimate: DisturbanceEstimate, t: f64) -> Result<JointCommand> {
        if !u.is_finite() {
            return Err(Error::Divergence {
                joint: self.index,
                time: t,
            });
        }
        Ok(JointCommand {
            u,
            reference,
            estimate,
        })
    }

    pub fn step(&self, x: &JointVector, t: f64, dob: &DobState) -> Result<JointCommand> {
        match self.law {
            Law::Position { .. } => self.step_position(x, t, dob),
            Law::Force { .. } => self.step_force(x, t, dob),
        }
    }

    pub fn observer_rate(&self, dob: &DobState, x: &JointVector, u: f64) -> Result<DobState> {
        dob_derivative(dob, x, u, &self.model, &self.gains)
    }
}

/// Controller for the whole robot: one [`JointController`] and one observer
/// per joint, advanced in lockstep.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    joints: Vec<JointController>,
    observers: Vec<DobState>,
    last_u: Vec<f64>,
    last_x: Vec<JointVector>,
    torque_limit: Option<f64>,
}

impl Controller {
    pub fn new(
        nominal: &[JointParams],
        modes: &[ControlMode],
        config: &ControllerConfig,
        initial: &[JointVector],
    ) -> Result<Self> {
        let n = nominal.len();
        if modes.len() != n || config.dob_bandwidth.len() != n || initial.len() != n {
            return Err(Error::Synthesis(format!(
                "expected {n} modes, bandwidths and initial states; got {}, {}, {}",
                modes.len(),
                config.dob_bandwidth.len(),
                initial.len()
            )));
        }
        let joints = (0..n)
            .map(|i| {
                JointController::new(
                    i,
                    nominal[i],
                    modes[i].clone(),
                    config.dob_bandwidth[i],
                    &config.poles,
                    config.force_gains,
                )
                .map_err(|e| e.at_joint(i))
            })
            .collect::<Result<Vec<_>>>()?;
        let observers = joints
            .iter()
            .zip(initial)
            .map(|(j, x)| DobState::initial(x, &j.gains))
            .collect();
        Ok(Self {
            joints,
            observers,
            last_u: vec![0.0; n],
            last_x: initial.to_vec(),
            torque_limit: config.torque_limit,
        })
    }

    pub fn joints(&self) -> &[JointController] {
        &self.joints
    }

    pub fn observers(&self) -> &[DobState] {
        &self.observers
    }

    pub fn set_observers(&mut self, observers: Vec<DobState>) {
        debug_assert_eq!(observers.len(), self.joints.len());
        self.observers = observers;
    }

    pub fn last_command(&self) -> &[f64] {
        &self.last_u
    }

    pub fn certificates(&self) -> Vec<&LyapunovCertificate> {
        self.joints.iter().map(|j| &j.certificate).collect()
    }

    fn saturate(&self, u: f64) -> f64 {
        match self.torque_limit {
            Some(limit) => u.clamp(-limit, limit),
            None => u,
        }
    }

    /// Observer rates for every joint, given stage states and held inputs.
    pub fn observer_rates(
        &self,
        observers: &[DobState],
        xs: &[JointVector],
        us: &[f64],
    ) -> Result<Vec<DobState>> {
        self.joints
            .iter()
            .enumerate()
            .map(|(i, j)| j.observer_rate(&observers[i], &xs[i], us[i]).map_err(|e| e.at_joint(i)))
            .collect()
    }

    /// Evaluates every joint's law for the given observer states without
    /// touching the controller's own state.
    pub fn evaluate(&self, t: f64, xs: &[JointVector], observers: &[DobState]) -> Result<Vec<JointCommand>> {
        self.joints
            .iter()
            .enumerate()
            .map(|(i, joint)| {
                let mut cmd = joint.step(&xs[i], t, &observers[i]).map_err(|e| match e {
                    Error::Divergence { .. } => Error::Divergence { joint: i, time: t },
                    e => e.at_joint(i),
                })?;
                cmd.u = self.saturate(cmd.u);
                Ok(cmd)
            })
            .collect()
    }

    /// Evaluates every joint's law with the current observer states and
    /// stores the (saturated) commands as the held input.
    pub fn command(&mut self, t: f64, xs: &[JointVector]) -> Result<Vec<JointCommand>> {
        let out = self.evaluate(t, xs, &self.observers)?;
        self.last_u = out.iter().map(|c| c.u).collect();
        self.last_x = xs.to_vec();
        Ok(out)
    }

    /// Integrates the observers across one sampling interval of length `dt`
    /// with the previously held command and a measurement interpolated
    /// linearly between the last and the current sample, then evaluates the
    /// control law at `t`.
    pub fn advance(&mut self, t: f64, xs: &[JointVector], dt: f64) -> Result<Vec<JointCommand>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be > 0, got {dt}"),
            });
        }
        let n = self.joints.len();
        let flat: Vec<f64> = self.observers.iter().flat_map(|o| o.as_array()).collect();
        let t0 = t - dt;
        let next = rk4_step(t0, &flat, dt, |s, y| {
            let w = (s - t0) / dt;
            let stage_x: Vec<JointVector> = (0..n)
                .map(|i| self.last_x[i] * (1.0 - w) + xs[i] * w)
                .collect();
            let obs: Vec<DobState> = y.chunks(12).map(DobState::from_slice).collect();
            let rates = self.observer_rates(&obs, &stage_x, &self.last_u)?;
            Ok(rates.iter().flat_map(|r| r.as_array()).collect())
        })
        .map_err(|e| match e {
            Error::Joint { joint, .. } => Error::Divergence { joint, time: t },
            e => e,
        })?;
        self.observers = next.chunks(12).map(DobState::from_slice).collect();
        self.command(t, xs)
    }
}

/// Packs `[q_J, dq_J, q_m, dq_m]`.
pub fn joint_state(q_j: f64, dq_j: f64, q_m: f64, dq_m: f64) -> JointVector {
    Vector4::new(q_j, dq_j, q_m, dq_m)
}
