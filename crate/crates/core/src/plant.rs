//! Ground-truth multibody dynamics of a planar serial arm with an SEA at
//! every joint.
//!
//! Link side:  `M(q_m) q̈_m + C(q_m, q̇_m) q̇_m + b_m q̇_m + G(q_m) + τ_env + τ_f,m = k (q_J - q_m)`
//! Motor side: `J q̈_J + b_J q̇_J + τ_f,J = u - k (q_J - q_m)`
//!
//! Joint angles are relative; link `i` has absolute angle `q_1 + ... + q_i`.
//! Gravity, when non-zero, acts along `-y`.

use nalgebra::{DMatrix, DVector, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{non_negative, positive, JointParams, JointVector};

/// Velocity scale of the tanh-smoothed Coulomb friction (rad/s).
pub const COULOMB_SMOOTHING: f64 = 1e-3;

/// Mass-matrix condition number above which a warning is logged.
pub const MASS_MATRIX_CONDITION_WARNING: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkGeometry {
    pub lengths: Vec<f64>,
    pub masses: Vec<f64>,
    /// Distance from the proximal joint to the link's center of mass.
    pub com_offsets: Vec<f64>,
    /// Rotational inertia about the center of mass.
    pub link_inertias: Vec<f64>,
    #[serde(default)]
    pub gravity: f64,
}

impl LinkGeometry {
    pub fn joints(&self) -> usize {
        self.lengths.len()
    }

    /// Uniform slender rods.
    pub fn rods(lengths: &[f64], masses: &[f64]) -> Self {
        Self {
            lengths: lengths.to_vec(),
            masses: masses.to_vec(),
            com_offsets: lengths.iter().map(|l| l / 2.0).collect(),
            link_inertias: lengths
                .iter()
                .zip(masses)
                .map(|(l, m)| m * l * l / 12.0)
                .collect(),
            gravity: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joints();
        if n == 0 {
            return Err(Error::invalid("geometry.lengths", "must name at least one link"));
        }
        for (field, len) in [
            ("geometry.masses", self.masses.len()),
            ("geometry.com_offsets", self.com_offsets.len()),
            ("geometry.link_inertias", self.link_inertias.len()),
        ] {
            if len != n {
                return Err(Error::invalid(field, format!("must have {n} entries, got {len}")));
            }
        }
        for i in 0..n {
            positive("geometry.lengths", self.lengths[i])?;
            positive("geometry.masses", self.masses[i])?;
            non_negative("geometry.link_inertias", self.link_inertias[i])?;
            if !self.com_offsets[i].is_finite() {
                return Err(Error::invalid("geometry.com_offsets", "must be finite"));
            }
        }
        if !self.gravity.is_finite() {
            return Err(Error::invalid("geometry.gravity", "must be finite"));
        }
        Ok(())
    }

    /// Scales masses and rotational inertias.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            masses: self.masses.iter().map(|m| m * factor).collect(),
            link_inertias: self.link_inertias.iter().map(|i| i * factor).collect(),
            ..self.clone()
        }
    }
}

/// True actuator parameters. The link-side inertia of the plant comes from
/// [`LinkGeometry`], not from a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Actuator {
    pub motor_inertia: f64,
    #[serde(default)]
    pub motor_damping: f64,
    #[serde(default)]
    pub link_damping: f64,
    pub stiffness: f64,
}

impl Actuator {
    pub fn validate(&self) -> Result<()> {
        positive("actuator.motor_inertia", self.motor_inertia)?;
        positive("actuator.stiffness", self.stiffness)?;
        non_negative("actuator.motor_damping", self.motor_damping)?;
        non_negative("actuator.link_damping", self.link_damping)?;
        Ok(())
    }
}

impl From<&JointParams> for Actuator {
    fn from(p: &JointParams) -> Self {
        Self {
            motor_inertia: p.motor_inertia,
            motor_damping: p.motor_damping,
            link_damping: p.link_damping,
            stiffness: p.stiffness,
        }
    }
}

/// Friction and ripple not represented in the nominal model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnmodeledFriction {
    /// Coulomb level on the motor side (N·m).
    pub motor_coulomb: f64,
    /// Coulomb level on the link side (N·m).
    pub link_coulomb: f64,
    /// Motor-side torque ripple amplitude (N·m).
    pub ripple_amplitude: f64,
    /// Ripple periods per motor revolution.
    pub ripple_periods: f64,
}

impl UnmodeledFriction {
    pub fn motor_torque(&self, q: f64, dq: f64) -> f64 {
        self.motor_coulomb * (dq / COULOMB_SMOOTHING).tanh()
            + self.ripple_amplitude * (self.ripple_periods * q).sin()
    }

    pub fn link_torque(&self, dq: f64) -> f64 {
        self.link_coulomb * (dq / COULOMB_SMOOTHING).tanh()
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("friction.motor_coulomb", self.motor_coulomb)?;
        non_negative("friction.link_coulomb", self.link_coulomb)?;
        non_negative("friction.ripple_amplitude", self.ripple_amplitude)?;
        if !self.ripple_periods.is_finite() {
            return Err(Error::invalid("friction.ripple_periods", "must be finite"));
        }
        Ok(())
    }
}

/// Per-joint Kelvin–Voigt wall engaged when `q_m ≥ boundary`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    /// Apparent inertia added to the link while in contact.
    pub inertia: Vec<f64>,
    pub damping: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub boundary: Vec<f64>,
    pub active: Vec<bool>,
}

impl Environment {
    pub fn free(n: usize) -> Self {
        Self {
            inertia: vec![0.0; n],
            damping: vec![0.0; n],
            stiffness: vec![0.0; n],
            boundary: vec![0.0; n],
            active: vec![false; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for (field, len) in [
            ("environment.inertia", self.inertia.len()),
            ("environment.damping", self.damping.len()),
            ("environment.stiffness", self.stiffness.len()),
            ("environment.boundary", self.boundary.len()),
            ("environment.active", self.active.len()),
        ] {
            if len != n {
                return Err(Error::invalid(field, format!("must have {n} entries, got {len}")));
            }
        }
        for i in 0..n {
            non_negative("environment.inertia", self.inertia[i])?;
            non_negative("environment.damping", self.damping[i])?;
            non_negative("environment.stiffness", self.stiffness[i])?;
            if !self.boundary[i].is_finite() {
                return Err(Error::invalid("environment.boundary", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn in_contact(&self, joint: usize, q_m: f64) -> bool {
        self.active.get(joint).copied().unwrap_or(false) && q_m >= self.boundary[joint]
    }

    /// Spring-damper torque at one joint; zero when not engaged.
    pub fn torque(&self, joint: usize, q_m: f64, dq_m: f64) -> f64 {
        if self.in_contact(joint, q_m) {
            self.stiffness[joint] * (q_m - self.boundary[joint]) + self.damping[joint] * dq_m
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadLocation {
    /// Halfway along the given link (0-based).
    LinkMidspan(usize),
    /// End of the last link.
    Tip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadEvent {
    pub time: f64,
    pub location: PayloadLocation,
    pub mass: f64,
}

impl PayloadEvent {
    pub fn validate(&self, n: usize) -> Result<()> {
        non_negative("payload.time", self.time)?;
        non_negative("payload.mass", self.mass)?;
        if let PayloadLocation::LinkMidspan(link) = self.location {
            if link >= n {
                return Err(Error::invalid(
                    "payloads.location",
                    format!("link {link} does not exist (robot has {n} links)"),
                ));
            }
        }
        Ok(())
    }
}

/// Everything about the robot and its surroundings that the controller
/// does not know exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub geometry: LinkGeometry,
    pub actuators: Vec<Actuator>,
    pub friction: Vec<UnmodeledFriction>,
    pub environment: Environment,
    pub payloads: Vec<PayloadEvent>,
}

impl World {
    pub fn joints(&self) -> usize {
        self.geometry.joints()
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let n = self.joints();
        if self.actuators.len() != n {
            return Err(Error::invalid(
                "actuators",
                format!("must have {n} entries, got {}", self.actuators.len()),
            ));
        }
        if self.friction.len() != n {
            return Err(Error::invalid(
                "friction",
                format!("must have {n} entries, got {}", self.friction.len()),
            ));
        }
        for a in &self.actuators {
            a.validate()?;
        }
        for f in &self.friction {
            f.validate()?;
        }
        self.environment.validate(n)?;
        for p in &self.payloads {
            p.validate(n)?;
        }
        Ok(())
    }

    /// Payloads attached at or before `t`.
    pub fn payloads_at(&self, t: f64) -> Vec<PayloadEvent> {
        self.payloads.iter().filter(|p| p.time <= t).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub q_j: DVector<f64>,
    pub dq_j: DVector<f64>,
    pub q_m: DVector<f64>,
    pub dq_m: DVector<f64>,
    pub t: f64,
}

impl RobotState {
    pub fn at_rest(q_m: &[f64]) -> Self {
        let n = q_m.len();
        Self {
            q_j: DVector::from_column_slice(q_m),
            dq_j: DVector::zeros(n),
            q_m: DVector::from_column_slice(q_m),
            dq_m: DVector::zeros(n),
            t: 0.0,
        }
    }

    pub fn joints(&self) -> usize {
        self.q_m.len()
    }

    /// `[q_J, dq_J, q_m, dq_m]` of one joint.
    pub fn joint(&self, i: usize) -> JointVector {
        Vector4::new(self.q_j[i], self.dq_j[i], self.q_m[i], self.dq_m[i])
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.joints());
        out.extend(self.q_j.iter());
        out.extend(self.dq_j.iter());
        out.extend(self.q_m.iter());
        out.extend(self.dq_m.iter());
        out
    }

    pub fn from_flat(flat: &[f64], t: f64) -> Self {
        let n = flat.len() / 4;
        Self {
            q_j: DVector::from_column_slice(&flat[..n]),
            dq_j: DVector::from_column_slice(&flat[n..2 * n]),
            q_m: DVector::from_column_slice(&flat[2 * n..3 * n]),
            dq_m: DVector::from_column_slice(&flat[3 * n..]),
            t,
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for i in 0..self.joints() {
            if !self.joint(i).iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence {
                    joint: i,
                    time: self.t,
                });
            }
        }
        Ok(())
    }
}

/// Time derivative of a [`RobotState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub dq_j: DVector<f64>,
    pub ddq_j: DVector<f64>,
    pub dq_m: DVector<f64>,
    pub ddq_m: DVector<f64>,
}

impl StateDerivative {
    pub fn joint(&self, i: usize) -> JointVector {
        Vector4::new(self.dq_j[i], self.ddq_j[i], self.dq_m[i], self.ddq_m[i])
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.dq_j.len());
        out.extend(self.dq_j.iter());
        out.extend(self.ddq_j.iter());
        out.extend(self.dq_m.iter());
        out.extend(self.ddq_m.iter());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkDynamics {
    pub mass: DMatrix<f64>,
    pub coriolis: DMatrix<f64>,
    pub gravity: DVector<f64>,
}

/// A rigid body carried by one link.
#[derive(Debug, Clone, Copy)]
struct Body {
    link: usize,
    offset: f64,
    mass: f64,
    inertia: f64,
}

fn bodies(geometry: &LinkGeometry, payloads: &[PayloadEvent]) -> Vec<Body> {
    let n = geometry.joints();
    let mut out: Vec<Body> = (0..n)
        .map(|i| Body {
            link: i,
            offset: geometry.com_offsets[i],
            mass: geometry.masses[i],
            inertia: geometry.link_inertias[i],
        })
        .collect();
    out.extend(payloads.iter().map(|p| {
        let (link, offset) = match p.location {
            PayloadLocation::LinkMidspan(l) => (l, geometry.lengths[l] / 2.0),
            PayloadLocation::Tip => (n - 1, geometry.lengths[n - 1]),
        };
        Body {
            link,
            offset,
            mass: p.mass,
            inertia: 0.0,
        }
    }));
    out
}

fn absolute_angles(q: &DVector<f64>) -> Vec<f64> {
    q.iter()
        .scan(0.0, |acc, qi| {
            *acc += qi;
            Some(*acc)
        })
        .collect()
}

/// Position kinematics of one body: segments `(link, length)` from the base.
fn segments(body: &Body, geometry: &LinkGeometry) -> Vec<(usize, f64)> {
    let mut s: Vec<(usize, f64)> = (0..body.link).map(|j| (j, geometry.lengths[j])).collect();
    s.push((body.link, body.offset));
    s
}

/// Position, Jacobian columns and Hessian blocks of a body's reference point.
struct BodyKinematics {
    height: f64,
    jac: Vec<Vector2<f64>>,
    hess: Vec<Vec<Vector2<f64>>>,
}

fn body_kinematics(body: &Body, geometry: &LinkGeometry, theta: &[f64]) -> BodyKinematics {
    let n = theta.len();
    let segs = segments(body, geometry);
    let mut height = 0.0;
    let mut jac = vec![Vector2::zeros(); n];
    let mut hess = vec![vec![Vector2::zeros(); n]; n];
    for &(j, len) in &segs {
        let (s, c) = theta[j].sin_cos();
        height += len * s;
        let d1 = Vector2::new(-s, c) * len;
        let d2 = Vector2::new(-c, -s) * len;
        for k in 0..=j {
            jac[k] += d1;
            for l in 0..=j {
                hess[k][l] += d2;
            }
        }
    }
    BodyKinematics { height, jac, hess }
}

/// Inertia, Coriolis (Christoffel construction) and gravity terms.
pub fn compute_link_dynamics(
    q_m: &DVector<f64>,
    dq_m: &DVector<f64>,
    geometry: &LinkGeometry,
    payloads: &[PayloadEvent],
) -> LinkDynamics {
    let n = geometry.joints();
    let theta = absolute_angles(q_m);
    let mut mass = DMatrix::zeros(n, n);
    // dmass[i] = ∂M/∂q_i
    let mut dmass = vec![DMatrix::<f64>::zeros(n, n); n];
    let mut gravity = DVector::zeros(n);

    for body in bodies(geometry, payloads) {
        let kin = body_kinematics(&body, geometry, &theta);
        for k in 0..n {
            for l in 0..n {
                mass[(k, l)] += body.mass * kin.jac[k].dot(&kin.jac[l]);
                if k <= body.link && l <= body.link {
                    mass[(k, l)] += body.inertia;
                }
                for i in 0..n {
                    dmass[i][(k, l)] += body.mass
                        * (kin.hess[k][i].dot(&kin.jac[l]) + kin.jac[k].dot(&kin.hess[l][i]));
                }
            }
            gravity[k] += body.mass * geometry.gravity * kin.jac[k][1];
        }
    }

    let mut coriolis = DMatrix::zeros(n, n);
    for k in 0..n {
        for j in 0..n {
            coriolis[(k, j)] = (0..n)
                .map(|i| {
                    0.5 * (dmass[i][(k, j)] + dmass[j][(k, i)] - dmass[k][(i, j)]) * dq_m[i]
                })
                .sum();
        }
    }

    let cond = mass.clone().singular_values();
    if cond.max() > MASS_MATRIX_CONDITION_WARNING * cond.min() {
        log::warn!(
            "link inertia matrix is near singular (condition number {:.3e})",
            cond.max() / cond.min()
        );
    }
    LinkDynamics {
        mass,
        coriolis,
        gravity,
    }
}

/// Total mechanical energy: kinetic, spring and gravitational potential.
pub fn mechanical_energy(state: &RobotState, world: &World, payloads: &[PayloadEvent]) -> f64 {
    let dynamics = compute_link_dynamics(&state.q_m, &state.dq_m, &world.geometry, payloads);
    let theta = absolute_angles(&state.q_m);
    let kinetic_link = 0.5 * (state.dq_m.transpose() * &dynamics.mass * &state.dq_m)[0];
    let mut energy = kinetic_link;
    for (i, act) in world.actuators.iter().enumerate() {
        let defl = state.q_j[i] - state.q_m[i];
        energy += 0.5 * act.motor_inertia * state.dq_j[i].powi(2) + 0.5 * act.stiffness * defl * defl;
    }
    for body in bodies(&world.geometry, payloads) {
        let kin = body_kinematics(&body, &world.geometry, &theta);
        energy += body.mass * world.geometry.gravity * kin.height;
    }
    energy
}

/// Intermediate quantities of one plant evaluation.
struct Evaluation {
    derivative: StateDerivative,
    dynamics: LinkDynamics,
    motor_friction: DVector<f64>,
    link_friction: DVector<f64>,
    contact: DVector<f64>,
    contact_inertia: DVector<f64>,
}

fn evaluate(
    state: &RobotState,
    u: &[f64],
    world: &World,
    payloads: &[PayloadEvent],
) -> Result<Evaluation> {
    let n = world.joints();
    let env = &world.environment;
    let mut dynamics = compute_link_dynamics(&state.q_m, &state.dq_m, &world.geometry, payloads);

    let mut ddq_j = DVector::zeros(n);
    let mut rhs = DVector::zeros(n);
    let mut motor_friction = DVector::zeros(n);
    let mut link_friction = DVector::zeros(n);
    let mut contact = DVector::zeros(n);
    let mut contact_inertia = DVector::zeros(n);
    let coriolis_torque = &dynamics.coriolis * &state.dq_m;

    for i in 0..n {
        let act = &world.actuators[i];
        let fr = &world.friction[i];
        let spring = act.stiffness * (state.q_j[i] - state.q_m[i]);
        motor_friction[i] = fr.motor_torque(state.q_j[i], state.dq_j[i]);
        link_friction[i] = fr.link_torque(state.dq_m[i]);
        ddq_j[i] = (u[i] - spring - act.motor_damping * state.dq_j[i] - motor_friction[i])
            / act.motor_inertia;

        contact[i] = env.torque(i, state.q_m[i], state.dq_m[i]);
        if env.in_contact(i, state.q_m[i]) {
            contact_inertia[i] = env.inertia[i];
            dynamics.mass[(i, i)] += env.inertia[i];
        }
        rhs[i] = spring
            - coriolis_torque[i]
            - act.link_damping * state.dq_m[i]
            - dynamics.gravity[i]
            - contact[i]
            - link_friction[i];
    }

    let ddq_m = dynamics
        .mass
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or(Error::Divergence {
            joint: 0,
            time: state.t,
        })?;

    for i in 0..n {
        if !(ddq_j[i].is_finite() && ddq_m[i].is_finite()) {
            return Err(Error::Divergence {
                joint: i,
                time: state.t,
            });
        }
    }

    Ok(Evaluation {
        derivative: StateDerivative {
            dq_j: state.dq_j.clone(),
            ddq_j,
            dq_m: state.dq_m.clone(),
            ddq_m,
        },
        dynamics,
        motor_friction,
        link_friction,
        contact,
        contact_inertia,
    })
}

/// Time derivative of the full plant state under motor torques `u`.
pub fn plant_derivative(
    state: &RobotState,
    u: &[f64],
    world: &World,
    payloads: &[PayloadEvent],
) -> Result<StateDerivative> {
    evaluate(state, u, world, payloads).map(|e| e.derivative)
}

/// Ground-truth disturbance at one joint, itemized.
///
/// Motor-side (matched) terms are in N·m acting against the motor; link-side
/// (mismatched) terms are in N·m acting against the link.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DisturbanceBreakdown {
    pub motor_inertia: f64,
    pub motor_damping: f64,
    pub motor_stiffness: f64,
    pub motor_unmodeled: f64,
    pub link_inertia: f64,
    pub link_coupling: f64,
    pub link_coriolis: f64,
    pub link_gravity: f64,
    pub link_damping: f64,
    pub link_stiffness: f64,
    pub link_unmodeled: f64,
    pub link_contact: f64,
    /// Lumped vector `[0, matched / J_n, 0, mismatched / m_n]`.
    pub lumped: JointVector,
}

impl DisturbanceBreakdown {
    pub fn matched(&self) -> f64 {
        self.motor_inertia + self.motor_damping + self.motor_stiffness + self.motor_unmodeled
    }

    pub fn mismatched(&self) -> f64 {
        self.link_inertia
            + self.link_coupling
            + self.link_coriolis
            + self.link_gravity
            + self.link_damping
            + self.link_stiffness
            + self.link_unmodeled
            + self.link_contact
    }
}

/// Evaluates the disturbance each joint's nominal linear model sees, term by
/// term, from the true accelerations. Test oracle only.
pub fn true_disturbance(
    state: &RobotState,
    u: &[f64],
    world: &World,
    payloads: &[PayloadEvent],
    nominal: &[JointParams],
) -> Result<Vec<DisturbanceBreakdown>> {
    let eval = evaluate(state, u, world, payloads)?;
    let d = &eval.derivative;
    let coriolis_torque = &eval.dynamics.coriolis * &state.dq_m;
    let n = world.joints();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let act = &world.actuators[i];
        let nom = &nominal[i];
        let defl = state.q_j[i] - state.q_m[i];
        let coupling: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| eval.dynamics.mass[(i, j)] * d.ddq_m[j])
            .sum();
        let mut b = DisturbanceBreakdown {
            motor_inertia: (act.motor_inertia - nom.motor_inertia) * d.ddq_j[i],
            motor_damping: (act.motor_damping - nom.motor_damping) * state.dq_j[i],
            motor_stiffness: (act.stiffness - nom.stiffness) * defl,
            motor_unmodeled: eval.motor_friction[i],
            // the diagonal includes any contact inertia
            link_inertia: (eval.dynamics.mass[(i, i)] - eval.contact_inertia[i] - nom.link_inertia)
                * d.ddq_m[i],
            link_coupling: coupling,
            link_coriolis: coriolis_torque[i],
            link_gravity: eval.dynamics.gravity[i],
            link_damping: (act.link_damping - nom.link_damping) * state.dq_m[i],
            link_stiffness: -(act.stiffness - nom.stiffness) * defl,
            link_unmodeled: eval.link_friction[i],
            link_contact: eval.contact[i] + eval.contact_inertia[i] * d.ddq_m[i],
            lumped: JointVector::zeros(),
        };
        b.lumped = Vector4::new(
            0.0,
            b.matched() / nom.motor_inertia,
            0.0,
            b.mismatched() / nom.link_inertia,
        );
        out.push(b);
    }
    Ok(out)
}
