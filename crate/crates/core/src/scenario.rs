//! Scenario description, JSON parsing and the built-in campaigns.

use serde::{Deserialize, Serialize};

use crate::controller::{ControlMode, ControllerConfig, ForceGains, DEFAULT_POLES};
use crate::error::{Error, Result};
use crate::model::JointParams;
use crate::plant::{
    Actuator, Environment, LinkGeometry, PayloadEvent, PayloadLocation,
    UnmodeledFriction, World,
};
use crate::trajectory::{Step, Trajectory};

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_DOB_BANDWIDTH: f64 = 8000.0;

/// Default robot sizing.
pub const DEFAULT_LENGTHS: [f64; 3] = [0.3, 0.3, 0.2];
pub const DEFAULT_MASSES: [f64; 3] = [2.0, 1.5, 1.0];
pub const DEFAULT_STIFFNESS: f64 = 500.0;
pub const DEFAULT_MOTOR_INERTIA: f64 = 0.05;
/// True inertias exceed the nominal ones by this factor.
pub const DEFAULT_INERTIA_MISMATCH: f64 = 1.2;
pub const DEFAULT_MOTOR_COULOMB: f64 = 0.5;
/// Nominal link inertias of the decentralized joint models (kg·m²).
pub const DEFAULT_NOMINAL_LINK_INERTIA: [f64; 3] = [0.25, 0.05, 0.011];

/// Post-processing settings for metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Samples before this time are excluded from RMS and max error (s).
    pub transient: f64,
    /// Settling band on the tracking error (rad or N·m).
    pub band: f64,
    /// Length of the final window used for steady-state statistics (s).
    pub steady_window: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            transient: 1.0,
            band: 1e-3,
            steady_window: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub name: String,
    /// Integration step (s).
    pub dt: f64,
    /// Simulated time (s).
    pub duration: f64,
    /// Seed for measurement noise.
    pub seed: u64,
    /// True link geometry.
    pub geometry: LinkGeometry,
    /// True actuator parameters.
    pub actuators: Vec<Actuator>,
    /// Parameters the controller is designed with.
    pub nominal: Vec<JointParams>,
    pub friction: Vec<UnmodeledFriction>,
    pub environment: Environment,
    pub payloads: Vec<PayloadEvent>,
    pub modes: Vec<ControlMode>,
    /// Link (and motor) angles at t = 0; the springs start relaxed.
    pub initial_angles: Vec<f64>,
    /// Observer bandwidth per joint (rad/s).
    pub dob_bandwidth: Vec<f64>,
    /// Closed-loop poles of the position controller (rad/s).
    pub position_poles: [f64; 4],
    pub force_gains: ForceGains,
    pub torque_limit: Option<f64>,
    /// Standard deviation of additive measurement noise; 0 disables it.
    pub measurement_noise: f64,
    pub metrics: MetricsConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        let nominal = DEFAULT_NOMINAL_LINK_INERTIA
            .iter()
            .map(|&m| JointParams {
                motor_inertia: DEFAULT_MOTOR_INERTIA,
                link_inertia: m,
                motor_damping: 0.0,
                link_damping: 0.0,
                stiffness: DEFAULT_STIFFNESS,
            })
            .collect();
        let actuators = vec![
            Actuator {
                motor_inertia: DEFAULT_MOTOR_INERTIA * DEFAULT_INERTIA_MISMATCH,
                motor_damping: 0.0,
                link_damping: 0.0,
                stiffness: DEFAULT_STIFFNESS,
            };
            3
        ];
        Self {
            name: "custom".into(),
            dt: DEFAULT_DT,
            duration: 2.0,
            seed: 0,
            geometry: LinkGeometry::rods(&DEFAULT_LENGTHS, &DEFAULT_MASSES).scaled(DEFAULT_INERTIA_MISMATCH),
            actuators,
            nominal,
            friction: vec![
                UnmodeledFriction {
                    motor_coulomb: DEFAULT_MOTOR_COULOMB,
                    ..Default::default()
                };
                3
            ],
            environment: Environment::free(3),
            payloads: Vec::new(),
            modes: vec![ControlMode::default(); 3],
            initial_angles: vec![0.0; 3],
            dob_bandwidth: vec![DEFAULT_DOB_BANDWIDTH; 3],
            position_poles: DEFAULT_POLES,
            force_gains: ForceGains::default(),
            torque_limit: None,
            measurement_noise: 0.0,
            metrics: MetricsConfig::default(),
        }
    }
}

impl Scenario {
    pub fn joints(&self) -> usize {
        self.geometry.joints()
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be > 0"));
        }
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return Err(Error::invalid("duration", "must be >= dt"));
        }
        let n = self.joints();
        self.world().validate()?;
        for (field, len) in [
            ("nominal", self.nominal.len()),
            ("modes", self.modes.len()),
            ("initial_angles", self.initial_angles.len()),
            ("dob_bandwidth", self.dob_bandwidth.len()),
        ] {
            if len != n {
                return Err(Error::invalid(field, format!("must have {n} entries, got {len}")));
            }
        }
        for (i, p) in self.nominal.iter().enumerate() {
            p.validate()
                .map_err(|e| Error::invalid(format!("nominal[{i}]"), e.to_string()))?;
        }
        for (i, m) in self.modes.iter().enumerate() {
            m.trajectory().validate(&format!("modes[{i}]"))?;
        }
        for (i, bw) in self.dob_bandwidth.iter().enumerate() {
            if !(bw.is_finite() && *bw > 0.0) {
                return Err(Error::invalid(format!("dob_bandwidth[{i}]"), "must be > 0"));
            }
        }
        if self.initial_angles.iter().any(|q| !q.is_finite()) {
            return Err(Error::invalid("initial_angles", "must be finite"));
        }
        if self.position_poles.iter().any(|p| !(p.is_finite() && *p < 0.0)) {
            return Err(Error::invalid("position_poles", "must be finite and < 0"));
        }
        let ForceGains { kp, kd } = self.force_gains;
        if !(kp > 0.0 && kd > 0.0 && kp.is_finite() && kd.is_finite()) {
            return Err(Error::invalid("force_gains", "kp and kd must be > 0"));
        }
        if let Some(limit) = self.torque_limit {
            if !(limit.is_finite() && limit > 0.0) {
                return Err(Error::invalid("torque_limit", "must be > 0"));
            }
        }
        if !(self.measurement_noise.is_finite() && self.measurement_noise >= 0.0) {
            return Err(Error::invalid("measurement_noise", "must be >= 0"));
        }
        let m = &self.metrics;
        if !(m.transient >= 0.0 && m.band > 0.0 && m.steady_window > 0.0) {
            return Err(Error::invalid(
                "metrics",
                "transient must be >= 0, band and steady_window > 0",
            ));
        }
        Ok(())
    }

    pub fn world(&self) -> World {
        World {
            geometry: self.geometry.clone(),
            actuators: self.actuators.clone(),
            friction: self.friction.clone(),
            environment: self.environment.clone(),
            payloads: self.payloads.clone(),
        }
    }

    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig {
            dob_bandwidth: self.dob_bandwidth.clone(),
            poles: self.position_poles,
            force_gains: self.force_gains,
            torque_limit: self.torque_limit,
        }
    }

    /// Times at which the robot is disturbed by a discrete change.
    pub fn event_times(&self, joint: usize) -> Vec<f64> {
        let mut times = self.modes[joint].trajectory().event_times();
        times.extend(self.payloads.iter().map(|p| p.time));
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        times
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Parses and validates a JSON scenario. Missing fields take the defaults of
/// [`Scenario::default`]; unknown fields are rejected.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

fn steps(initial: f64, steps: &[(f64, f64)]) -> Trajectory {
    Trajectory::Steps {
        initial,
        steps: steps
            .iter()
            .map(|&(time, value)| Step { time, value })
            .collect(),
        rise_time: crate::trajectory::DEFAULT_RISE_TIME,
    }
}

fn payload_events() -> Vec<PayloadEvent> {
    vec![
        PayloadEvent {
            time: 0.0,
            location: PayloadLocation::LinkMidspan(1),
            mass: 1.0,
        },
        PayloadEvent {
            time: 3.0,
            location: PayloadLocation::Tip,
            mass: 2.5,
        },
    ]
}

pub const SOFT_STIFFNESS: f64 = 100.0;
pub const STIFF_STIFFNESS: f64 = 10_000.0;

fn force_campaign(name: &str, stiffness: f64) -> Scenario {
    let initial = vec![0.3, 0.5, 0.4];
    let targets = [(2.0, 4.0), (1.5, 3.0), (0.5, 1.0)];
    Scenario {
        name: name.into(),
        duration: 4.0,
        environment: Environment {
            inertia: vec![0.0; 3],
            damping: vec![1.0; 3],
            stiffness: vec![stiffness; 3],
            boundary: initial.clone(),
            active: vec![true; 3],
        },
        modes: targets
            .iter()
            .map(|&(a, b)| ControlMode::Force(steps(0.0, &[(0.5, a), (2.0, b)])))
            .collect(),
        initial_angles: initial,
        metrics: MetricsConfig {
            transient: 1.0,
            band: 1e-3,
            steady_window: 0.5,
        },
        ..Scenario::default()
    }
}

/// The four reference campaigns: step regulation, sinusoid tracking and
/// force regulation against a soft and a stiff environment.
pub fn builtin_campaigns() -> Vec<Scenario> {
    let regulation = Scenario {
        name: "position-regulation".into(),
        duration: 6.0,
        payloads: payload_events(),
        modes: vec![
            ControlMode::Position(steps(0.0, &[(0.5, 0.5), (4.0, -0.2)])),
            ControlMode::Position(steps(0.0, &[(0.5, -0.4), (4.0, 0.3)])),
            ControlMode::Position(steps(0.0, &[(0.5, 0.6), (4.0, 0.1)])),
        ],
        ..Scenario::default()
    };
    let tracking = Scenario {
        name: "sinusoid-tracking".into(),
        duration: 6.0,
        payloads: payload_events(),
        modes: [(0.4, 0.5), (0.3, 0.7), (0.3, 1.0)]
            .iter()
            .map(|&(amplitude, frequency)| {
                ControlMode::Position(Trajectory::Sine {
                    amplitude,
                    frequency,
                    phase: 0.0,
                    offset: 0.0,
                })
            })
            .collect(),
        ..Scenario::default()
    };
    vec![
        regulation,
        tracking,
        force_campaign("force-soft", SOFT_STIFFNESS),
        force_campaign("force-stiff", STIFF_STIFFNESS),
    ]
}

pub fn builtin_campaign(name: &str) -> Option<Scenario> {
    builtin_campaigns().into_iter().find(|s| s.name == name)
}
