//! Decentralized per-joint linear model of an SEA joint.
//!
//! Each joint is described by the state `x = [q_J, dq_J, q_m, dq_m]` and
//!
//! ```text
//! dx/dt = A x + b u - tau_dis
//! ```
//!
//! where `u` is the motor torque and `tau_dis = [0, d_J / J, 0, d_m / m]`
//! lumps every effect the nominal parameters do not capture. `d_J` enters
//! through the input channel (matched), `d_m` does not (mismatched).

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type JointVector = Vector4<f64>;

/// Physical parameters of one SEA joint.
///
/// The same type carries the controller's nominal values and, for
/// single-joint studies, the plant's true values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointParams {
    /// Motor-side inertia J (kg·m²).
    pub motor_inertia: f64,
    /// Link-side inertia m (kg·m²).
    pub link_inertia: f64,
    /// Motor viscous friction b_J (N·m·s/rad).
    #[serde(default)]
    pub motor_damping: f64,
    /// Link viscous friction b_m (N·m·s/rad).
    #[serde(default)]
    pub link_damping: f64,
    /// Spring stiffness k (N·m/rad).
    pub stiffness: f64,
}

impl JointParams {
    pub fn validate(&self) -> Result<()> {
        positive("motor_inertia", self.motor_inertia)?;
        positive("link_inertia", self.link_inertia)?;
        positive("stiffness", self.stiffness)?;
        non_negative("motor_damping", self.motor_damping)?;
        non_negative("link_damping", self.link_damping)?;
        Ok(())
    }
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and > 0, got {value}"),
        })
    }
}

pub(crate) fn non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and >= 0, got {value}"),
        })
    }
}

/// The `(A, b)` pair of one joint.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalModel {
    pub a: Matrix4<f64>,
    pub b: Vector4<f64>,
    pub joint_index: usize,
    pub params: JointParams,
}

impl NominalModel {
    /// Builds the nominal model. Rows 1 and 3 of `A` are the kinematic
    /// shift rows; rows 2 and 4 are the motor and link equations of motion.
    pub fn new(params: JointParams, joint_index: usize) -> Result<Self> {
        params.validate()?;
        let JointParams {
            motor_inertia: j,
            link_inertia: m,
            motor_damping: bj,
            link_damping: bm,
            stiffness: k,
        } = params;
        #[rustfmt::skip]
        let a = Matrix4::new(
            0.0,     1.0,      0.0,     0.0,
            -k / j,  -bj / j,  k / j,   0.0,
            0.0,     0.0,      0.0,     1.0,
            k / m,   0.0,      -k / m,  -bm / m,
        );
        let b = Vector4::new(0.0, 1.0 / j, 0.0, 0.0);
        Ok(Self {
            a,
            b,
            joint_index,
            params,
        })
    }

    /// Nominal state derivative `A x + b u`, excluding disturbances.
    pub fn drift(&self, x: &JointVector, u: f64) -> JointVector {
        self.a * x + self.b * u
    }

    /// `[b, Ab, A²b, A³b]`.
    pub fn controllability(&self) -> Matrix4<f64> {
        let mut c = Matrix4::zeros();
        let mut col = self.b;
        for i in 0..4 {
            c.set_column(i, &col);
            col = self.a * col;
        }
        c
    }

    /// Splits a lumped disturbance vector into the physical motor-side
    /// (matched) and link-side (mismatched) torques.
    pub fn split_disturbance(&self, dist: &JointVector) -> Result<(f64, f64)> {
        matched_mismatched_split(&self.params, dist)
    }

    /// Inverse of [`split_disturbance`](Self::split_disturbance).
    pub fn lump_disturbance(&self, matched: f64, mismatched: f64) -> JointVector {
        Vector4::new(
            0.0,
            matched / self.params.motor_inertia,
            0.0,
            mismatched / self.params.link_inertia,
        )
    }
}

pub fn build_nominal_model(params: JointParams) -> Result<NominalModel> {
    NominalModel::new(params, 0)
}

pub fn matched_mismatched_split(params: &JointParams, dist: &JointVector) -> Result<(f64, f64)> {
    if dist[0] != 0.0 || dist[2] != 0.0 {
        return Err(Error::StructureViolation([dist[0], dist[1], dist[2], dist[3]]));
    }
    Ok((
        params.motor_inertia * dist[1],
        params.link_inertia * dist[3],
    ))
}
