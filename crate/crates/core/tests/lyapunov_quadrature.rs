use nalgebra::{DMatrix, Matrix4};
use proptest::prelude::*;

use sea_control::lyapunov::solve_lyapunov;

/// `∫₀^∞ e^{Aᵀt} Q e^{At} dt` by composite Simpson on a horizon long enough
/// for the integrand to vanish.
fn gramian(a: &Matrix4<f64>, q: &Matrix4<f64>, horizon: f64, intervals: usize) -> Matrix4<f64> {
    let h = horizon / intervals as f64;
    let step = (a * h).exp();
    let mut phi = Matrix4::identity();
    let mut sum = Matrix4::zeros();
    for i in 0..=intervals {
        let weight = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += phi.transpose() * q * phi * weight;
        phi = step * phi;
    }
    sum * (h / 3.0)
}

fn matrix(v: &[f64]) -> Matrix4<f64> {
    Matrix4::from_column_slice(v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn solution_matches_integral_form(
        skew in prop::collection::vec(-3.0f64..3.0, 16),
        spread in prop::collection::vec(-1.0f64..1.0, 16),
        shift in 0.5f64..2.0,
        weight in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        // skew part plus negative definite symmetric part is Hurwitz
        let s = matrix(&skew);
        let b = matrix(&spread);
        let a = (s - s.transpose()) * 0.5 - b * b.transpose() - Matrix4::identity() * shift;
        let w = matrix(&weight);
        let q = w * w.transpose() + Matrix4::identity() * 0.5;

        let cert = solve_lyapunov(
            &DMatrix::from_iterator(4, 4, a.iter().copied()),
            &DMatrix::from_iterator(4, 4, q.iter().copied()),
        )
        .unwrap();
        prop_assert!(cert.residual_norm < 1e-8);
        prop_assert!(cert.p_min_eig > 0.0);

        let horizon = 40.0 / shift;
        let oracle = gramian(&a, &q, horizon, 20_000);
        let p = Matrix4::from_iterator(cert.p.iter().copied());
        let rel = (p - oracle).amax() / oracle.amax();
        prop_assert!(rel < 1e-6, "relative difference {rel}");
    }
}
