//! Second-order disturbance observer.
//!
//! The observer tracks the auxiliary variables
//!
//! ```text
//! z1 = tau_dis + L1 x,   z2 = d/dt tau_dis + L2 x,   z3 = d²/dt² tau_dis + L3 x
//! ```
//!
//! per joint. Differentiating these along `dx/dt = A x + b u - tau_dis`
//! and dropping the unknown third derivative gives the observer below. The
//! estimation error `e = z - ẑ` then obeys, channel by channel,
//!
//! ```text
//! de1/dt = -L1 e1 + e2
//! de2/dt = -L2 e1 + e3
//! de3/dt = -L3 e1 + d³/dt³ tau_dis
//! ```
//!
//! so the error is independent of the input and converges whenever
//! `s³ + L1 s² + L2 s + L3` is Hurwitz.

use std::ops::{Add, Mul};

use nalgebra::{Matrix3, Vector4};

use crate::error::{Error, Result};
use crate::model::{JointVector, NominalModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DobGains {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl DobGains {
    pub fn new(l1: f64, l2: f64, l3: f64) -> Result<Self> {
        let gains = Self { l1, l2, l3 };
        if !gains.is_hurwitz() {
            return Err(Error::InvalidParameter {
                name: "dob_gains",
                reason: format!(
                    "s³ + {l1} s² + {l2} s + {l3} is not Hurwitz (need L1 > 0, L3 > 0, L1·L2 > L3)"
                ),
            });
        }
        Ok(gains)
    }

    /// Routh–Hurwitz test for the cubic error polynomial.
    pub fn is_hurwitz(&self) -> bool {
        self.l1 > 0.0 && self.l3 > 0.0 && self.l1 * self.l2 > self.l3 && self.l2.is_finite()
    }

    /// Per-channel error matrix; the full error system is this matrix
    /// Kronecker-multiplied with the 4×4 identity.
    pub fn error_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(-self.l1, 1.0, 0.0, -self.l2, 0.0, 1.0, -self.l3, 0.0, 0.0)
    }

    /// Magnitude of the transfer function from the disturbance to its
    /// estimation error, `|s³ / (s³ + L1 s² + L2 s + L3)|` at `s = jω`.
    pub fn error_gain(&self, omega: f64) -> f64 {
        let re = self.l3 - self.l1 * omega * omega;
        let im = self.l2 * omega - omega.powi(3);
        omega.powi(3) / re.hypot(im)
    }
}

/// Gains for a triple real pole at `-bandwidth`.
pub fn place_dob_poles(bandwidth: f64) -> Result<DobGains> {
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dob_bandwidth",
            reason: format!("must be finite and > 0, got {bandwidth}"),
        });
    }
    let g = bandwidth;
    DobGains::new(3.0 * g, 3.0 * g * g, g * g * g)
}

/// Auxiliary-variable estimates `(ẑ1, ẑ2, ẑ3)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DobState {
    pub z1: Vector4<f64>,
    pub z2: Vector4<f64>,
    pub z3: Vector4<f64>,
}

impl Add for DobState {
    type Output = DobState;
    fn add(self, rhs: Self) -> Self {
        DobState {
            z1: self.z1 + rhs.z1,
            z2: self.z2 + rhs.z2,
            z3: self.z3 + rhs.z3,
        }
    }
}

impl Mul<f64> for DobState {
    type Output = DobState;
    fn mul(self, s: f64) -> Self {
        DobState {
            z1: self.z1 * s,
            z2: self.z2 * s,
            z3: self.z3 * s,
        }
    }
}

/// Disturbance estimate and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DisturbanceEstimate {
    pub tau: Vector4<f64>,
    pub rate: Vector4<f64>,
    pub accel: Vector4<f64>,
}

impl DobState {
    /// Cold start with a zero disturbance estimate.
    pub fn initial(x: &JointVector, gains: &DobGains) -> Self {
        Self::from_disturbance(&DisturbanceEstimate::default(), x, gains)
    }

    /// Auxiliary variables of a known disturbance and state.
    pub fn from_disturbance(d: &DisturbanceEstimate, x: &JointVector, gains: &DobGains) -> Self {
        DobState {
            z1: d.tau + x * gains.l1,
            z2: d.rate + x * gains.l2,
            z3: d.accel + x * gains.l3,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.z1.iter().chain(self.z2.iter()).chain(self.z3.iter()).all(|v| v.is_finite())
    }

    pub fn as_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out[..4].copy_from_slice(self.z1.as_slice());
        out[4..8].copy_from_slice(self.z2.as_slice());
        out[8..].copy_from_slice(self.z3.as_slice());
        out
    }

    pub fn from_slice(s: &[f64]) -> Self {
        DobState {
            z1: Vector4::from_column_slice(&s[..4]),
            z2: Vector4::from_column_slice(&s[4..8]),
            z3: Vector4::from_column_slice(&s[8..12]),
        }
    }
}

pub fn dob_derivative(
    dob: &DobState,
    x: &JointVector,
    u: f64,
    model: &NominalModel,
    gains: &DobGains,
) -> Result<DobState> {
    let DobGains { l1, l2, l3 } = *gains;
    let drift = model.drift(x, u);
    let rate = DobState {
        z1: -dob.z1 * l1 + dob.z2 + drift * l1 + x * (l1 * l1 - l2),
        z2: -dob.z1 * l2 + dob.z3 + drift * l2 + x * (l1 * l2 - l3),
        z3: -dob.z1 * l3 + drift * l3 + x * (l3 * l1),
    };
    if rate.is_finite() {
        Ok(rate)
    } else {
        Err(Error::Divergence {
            joint: model.joint_index,
            time: f64::NAN,
        })
    }
}

pub fn extract_estimates(dob: &DobState, x: &JointVector, gains: &DobGains) -> DisturbanceEstimate {
    DisturbanceEstimate {
        tau: dob.z1 - x * gains.l1,
        rate: dob.z2 - x * gains.l2,
        accel: dob.z3 - x * gains.l3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_nominal_model, JointParams};
    use approx::assert_relative_eq;

    fn model() -> NominalModel {
        build_nominal_model(JointParams {
            motor_inertia: 0.05,
            link_inertia: 0.8,
            motor_damping: 0.01,
            link_damping: 0.02,
            stiffness: 500.0,
        })
        .unwrap()
    }

    #[test]
    fn pole_placement_arithmetic() {
        let g = place_dob_poles(100.0).unwrap();
        assert_eq!((g.l1, g.l2, g.l3), (300.0, 30000.0, 1000000.0));
        let g = place_dob_poles(1.0).unwrap();
        assert_eq!((g.l1, g.l2, g.l3), (3.0, 3.0, 1.0));
        assert!(place_dob_poles(0.0).is_err());
        assert!(place_dob_poles(-5.0).is_err());
        for bw in [1e-3, 0.5, 7.0, 250.0, 1e4] {
            let g = place_dob_poles(bw).unwrap();
            assert!(g.l1 * g.l2 > g.l3);
        }
    }

    #[test]
    fn non_hurwitz_gains_rejected() {
        assert!(DobGains::new(1.0, 1.0, 2.0).is_err());
        assert!(DobGains::new(-1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn extract_algebra() {
        let gains = place_dob_poles(10.0).unwrap();
        let x = Vector4::new(0.1, -0.2, 0.3, 0.4);
        let dob = DobState {
            z1: x * gains.l1,
            z2: Vector4::new(1.0, 2.0, 3.0, 4.0),
            z3: Vector4::zeros(),
        };
        assert_eq!(extract_estimates(&dob, &x, &gains).tau, Vector4::zeros());

        let dob = DobState {
            z1: Vector4::new(1.0, 2.0, 3.0, 4.0),
            z2: Vector4::new(5.0, 6.0, 7.0, 8.0),
            z3: Vector4::new(9.0, 10.0, 11.0, 12.0),
        };
        let est = extract_estimates(&dob, &Vector4::zeros(), &gains);
        assert_eq!((est.tau, est.rate, est.accel), (dob.z1, dob.z2, dob.z3));
    }

    #[test]
    fn zero_error_stays_zero() {
        // with ẑ = z and a constant disturbance the error rate vanishes
        let m = model();
        let gains = place_dob_poles(100.0).unwrap();
        let x = Vector4::new(0.2, 0.1, 0.15, -0.3);
        let u = 1.3;
        let d = DisturbanceEstimate {
            tau: Vector4::new(0.0, 4.0, 0.0, -2.0),
            ..Default::default()
        };
        let z = DobState::from_disturbance(&d, &x, &gains);
        let xdot = m.drift(&x, u) - d.tau;
        // true dz/dt for constant tau: L_j dx/dt
        let true_rate = DobState {
            z1: xdot * gains.l1,
            z2: xdot * gains.l2,
            z3: xdot * gains.l3,
        };
        let est_rate = dob_derivative(&z, &x, u, &m, &gains).unwrap();
        let diff = true_rate + est_rate * -1.0;
        for v in diff.as_array() {
            assert!(v.abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn error_matrix_spectrum_matches_polynomial() {
        let gains = DobGains::new(6.0, 11.0, 6.0).unwrap(); // roots -1, -2, -3
        let mut eig: Vec<f64> = gains
            .error_matrix()
            .complex_eigenvalues()
            .iter()
            .map(|e| e.re)
            .collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(eig[0], -3.0, epsilon = 1e-9);
        assert_relative_eq!(eig[1], -2.0, epsilon = 1e-9);
        assert_relative_eq!(eig[2], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn round_trip_through_auxiliary_variables() {
        let gains = place_dob_poles(37.0).unwrap();
        let x = Vector4::new(0.3, -1.1, 0.25, 0.7);
        let d = DisturbanceEstimate {
            tau: Vector4::new(0.5, -0.25, 2.0, 1.0),
            rate: Vector4::new(-3.0, 0.125, 0.0, 8.0),
            accel: Vector4::new(1.0, 2.0, 4.0, -16.0),
        };
        let z = DobState::from_disturbance(&d, &x, &gains);
        let back = extract_estimates(&z, &x, &gains);
        assert_relative_eq!(back.tau, d.tau, epsilon = 1e-9);
        assert_relative_eq!(back.rate, d.rate, epsilon = 1e-9);
        assert_relative_eq!(back.accel, d.accel, epsilon = 1e-9);
    }
}
