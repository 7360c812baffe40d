//! Gain certification through the continuous Lyapunov equation
//! `A_clᵀ P + P A_cl = -Q`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Residual bound a certificate must meet (Frobenius norm).
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovCertificate {
    #[serde(serialize_with = "serialize_matrix")]
    pub p: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub q: DMatrix<f64>,
    pub residual_norm: f64,
    pub p_min_eig: f64,
    pub q_min_eig: f64,
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for row in m.row_iter() {
        let row: Vec<f64> = row.iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

impl LyapunovCertificate {
    pub fn is_valid(&self) -> bool {
        self.p_min_eig > 0.0 && self.q_min_eig > 0.0 && self.residual_norm < RESIDUAL_TOLERANCE
    }

    /// Largest eigenvalue of P, i.e. its spectral norm.
    pub fn p_norm(&self) -> f64 {
        SymmetricEigen::new(self.p.clone()).eigenvalues.max()
    }

    pub fn value(&self, e: &DVector<f64>) -> f64 {
        (e.transpose() * &self.p * e)[0]
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn min_eig(sym: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym.clone()).eigenvalues.min()
}

/// Returns the first eigenvalue with non-negative real part, if any.
pub fn unstable_eigenvalue(a: &DMatrix<f64>) -> Option<(f64, f64)> {
    a.complex_eigenvalues()
        .iter()
        .find(|e| !(e.re < 0.0))
        .map(|e| (e.re, e.im))
}

/// Solves `A_clᵀ P + P A_cl = -Q` by vectorization.
///
/// With column-major `vec`, the equation is
/// `(I ⊗ A_clᵀ + A_clᵀ ⊗ I) vec(P) = -vec(Q)`.
pub fn solve_lyapunov(a_cl: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<LyapunovCertificate> {
    let n = a_cl.nrows();
    if a_cl.ncols() != n || q.shape() != (n, n) {
        return Err(Error::Synthesis(format!(
            "dimension mismatch: A_cl is {:?}, Q is {:?}",
            a_cl.shape(),
            q.shape()
        )));
    }
    if (q - q.transpose()).amax() > 1e-12 * (1.0 + q.amax()) {
        return Err(Error::WeightNotPositiveDefinite);
    }
    let q_min_eig = min_eig(q);
    if !(q_min_eig > 0.0) {
        return Err(Error::WeightNotPositiveDefinite);
    }
    if let Some((re, im)) = unstable_eigenvalue(a_cl) {
        return Err(Error::NotHurwitz { re, im });
    }

    let at = a_cl.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let lhs = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let vec_p = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Synthesis("singular Lyapunov operator".into()))?;
    let p = symmetrize(&DMatrix::from_column_slice(n, n, vec_p.as_slice()));

    let residual = a_cl.transpose() * &p + &p * a_cl + q;
    let cert = LyapunovCertificate {
        p_min_eig: min_eig(&p),
        p,
        q: q.clone(),
        residual_norm: residual.norm(),
        q_min_eig,
    };
    if !cert.is_valid() {
        return Err(Error::Synthesis(format!(
            "certificate rejected: residual {:.3e}, min eig(P) {:.3e}",
            cert.residual_norm, cert.p_min_eig
        )));
    }
    Ok(cert)
}

/// Radius of the ball outside which `V̇ < 0` when `‖Γ̂ - Γ‖ ≤ bound`:
/// `2 ‖P‖ bound / λ_min(Q)`.
pub fn ultimate_bound_estimate(cert: &LyapunovCertificate, est_error_bound: f64) -> f64 {
    if est_error_bound <= 0.0 {
        return 0.0;
    }
    2.0 * cert.p_norm() * est_error_bound / cert.q_min_eig
}
