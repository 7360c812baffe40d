//! Classical fixed-step fourth-order Runge–Kutta.

use crate::error::Result;

/// Advances `y` by one step of size `dt`. The right-hand side may fail, in
/// which case the step is abandoned.
pub fn rk4_step<F>(t: f64, y: &[f64], dt: f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let n = y.len();
    let axpy = |a: f64, x: &[f64]| -> Vec<f64> { (0..n).map(|i| y[i] + a * x[i]).collect() };

    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * dt, &axpy(0.5 * dt, &k1))?;
    let k3 = f(t + 0.5 * dt, &axpy(0.5 * dt, &k2))?;
    let k4 = f(t + dt, &axpy(dt, &k3))?;
    Ok((0..n)
        .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}
