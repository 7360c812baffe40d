//! Brunovsky canonical form of a joint model and the disturbance-corrected
//! reference generator built on it.
//!
//! With `ξ = T x` the joint dynamics become an integrator chain
//!
//! ```text
//! dξ/dt = Λ ξ + β v - Γ,   Γ = T tau_dis
//! ```
//!
//! whose first state is proportional to the link angle. Because `Γ` enters
//! every row, references for the whole chain are shifted by the estimated
//! disturbance and its derivatives so that only the input row has to be
//! compensated.

use nalgebra::{Matrix4, RowVector4, Vector4};

use crate::error::{Error, Result};
use crate::model::{JointVector, NominalModel};

/// Upper bound on the controllability matrix condition number.
pub const MAX_CONTROLLABILITY_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalModel {
    pub t: Matrix4<f64>,
    pub t_inv: Matrix4<f64>,
    pub lambda: Matrix4<f64>,
    pub beta: Vector4<f64>,
    /// Companion bottom row of `Λ`.
    pub a: RowVector4<f64>,
    /// First row of `T`.
    pub q: RowVector4<f64>,
}

/// Transformed disturbance estimate `Γ̂` with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GammaEstimates {
    pub value: Vector4<f64>,
    pub rate: Vector4<f64>,
    pub accel: Vector4<f64>,
}

/// Output of the reference generator and control law for one joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalRefs {
    pub xi_ref: Vector4<f64>,
    pub v: f64,
    pub gamma_hat: GammaEstimates,
}

/// Scalar output reference and its derivatives of order 0 through 4.
pub type OutputReference = [f64; 5];

fn condition_number(m: &Matrix4<f64>) -> f64 {
    let sv = m.singular_values();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

pub fn build_canonical(model: &NominalModel) -> Result<CanonicalModel> {
    let ctrb = model.controllability();
    let cond = condition_number(&ctrb);
    if !(cond <= MAX_CONTROLLABILITY_CONDITION) {
        return Err(Error::Synthesis(format!(
            "controllability matrix condition number {cond:.3e} exceeds {MAX_CONTROLLABILITY_CONDITION:.0e}; \
             rescale the joint parameters (units) before synthesis"
        )));
    }
    // qᵀ C = e₄ᵀ  <=>  Cᵀ q = e₄
    let q = ctrb
        .transpose()
        .lu()
        .solve(&Vector4::new(0.0, 0.0, 0.0, 1.0))
        .ok_or_else(|| Error::Synthesis("controllability matrix is singular".into()))?
        .transpose();

    let mut t = Matrix4::zeros();
    let mut row = q;
    for i in 0..4 {
        t.set_row(i, &row);
        row *= model.a;
    }
    let t_inv = t
        .try_inverse()
        .ok_or_else(|| Error::Synthesis("transformation matrix is singular".into()))?;
    let lambda = t * model.a * t_inv;
    let beta = t * model.b;
    Ok(CanonicalModel {
        t,
        t_inv,
        lambda,
        beta,
        a: lambda.row(3).into_owned(),
        q,
    })
}

impl CanonicalModel {
    pub fn to_canonical(&self, x: &JointVector) -> Vector4<f64> {
        self.t * x
    }

    /// Characteristic polynomial coefficients `[c0, c1, c2, c3]` of
    /// `s⁴ + c3 s³ + c2 s² + c1 s + c0` for the open loop.
    pub fn open_loop_coefficients(&self) -> [f64; 4] {
        [-self.a[0], -self.a[1], -self.a[2], -self.a[3]]
    }

    pub fn closed_loop(&self, k: &RowVector4<f64>) -> Matrix4<f64> {
        self.lambda - self.beta * k
    }
}

pub fn transform_disturbance(
    tau_hat: &Vector4<f64>,
    dtau_hat: &Vector4<f64>,
    ddtau_hat: &Vector4<f64>,
    canon: &CanonicalModel,
) -> GammaEstimates {
    GammaEstimates {
        value: canon.t * tau_hat,
        rate: canon.t * dtau_hat,
        accel: canon.t * ddtau_hat,
    }
}

/// State feedback placing the eigenvalues of `Λ - βK` at the given real poles.
///
/// In companion form the closed-loop bottom row is `aᵀ - K`, so `K` is the
/// open-loop row plus the desired characteristic coefficients.
pub fn place_poles(canon: &CanonicalModel, poles: &[f64; 4]) -> Result<RowVector4<f64>> {
    if let Some(p) = poles.iter().find(|p| !(p.is_finite() && **p < 0.0)) {
        return Err(Error::InvalidParameter {
            name: "poles",
            reason: format!("closed-loop poles must be finite and negative, got {p}"),
        });
    }
    let coeffs = poly_from_roots(poles);
    Ok(canon.a + RowVector4::new(coeffs[0], coeffs[1], coeffs[2], coeffs[3]))
}

/// Monic polynomial with the given roots, returned as `[c0, c1, ..., c_{n-1}]`.
pub(crate) fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    // coefficients in ascending order including the leading 1
    let mut c = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i + 1] += ci;
            next[i] -= r * ci;
        }
        c = next;
    }
    c.pop();
    c
}

/// Canonical state reference shifted by the disturbance estimates.
pub fn generate_references(y_ref: &OutputReference, gamma: &GammaEstimates) -> Vector4<f64> {
    let (g, dg, ddg) = (&gamma.value, &gamma.rate, &gamma.accel);
    Vector4::new(
        y_ref[0],
        y_ref[1] + g[0],
        y_ref[2] + dg[0] + g[1],
        y_ref[3] + ddg[0] + dg[1] + g[2],
    )
}

/// Canonical input
/// `v = y⁗ + K(ξ_ref - ξ) + Σ_j Γ̂_j^(4-j) - aᵀ ξ_ref`.
///
/// The observer provides derivatives up to second order, so the third
/// derivative of `Γ̂₁` is taken as zero. For SEA joints `Γ₁ ≡ 0`.
pub fn control_law(
    xi: &Vector4<f64>,
    xi_ref: &Vector4<f64>,
    y_ref: &OutputReference,
    k: &RowVector4<f64>,
    canon: &CanonicalModel,
    gamma: &GammaEstimates,
) -> f64 {
    let compensation = gamma.accel[1] + gamma.rate[2] + gamma.value[3];
    y_ref[4] + (k * (xi_ref - xi))[0] + compensation - (canon.a * xi_ref)[0]
}

/// Converts the canonical input into motor torque. `T b = β` scales the input
/// channel; with the controllability-based construction `β = e₄` and this is
/// the identity.
pub fn map_input_to_torque(v: f64, canon: &CanonicalModel, model: &NominalModel) -> f64 {
    let gain = (canon.t * model.b)[3];
    v / gain
}

/// Full reference generation and control evaluation for one joint.
pub fn canonical_command(
    x: &JointVector,
    y_ref: &OutputReference,
    k: &RowVector4<f64>,
    canon: &CanonicalModel,
    gamma: GammaEstimates,
) -> CanonicalRefs {
    let xi = canon.to_canonical(x);
    let xi_ref = generate_references(y_ref, &gamma);
    let v = control_law(&xi, &xi_ref, y_ref, k, canon, &gamma);
    CanonicalRefs {
        xi_ref,
        v,
        gamma_hat: gamma,
    }
}
