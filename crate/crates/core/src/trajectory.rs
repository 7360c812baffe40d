//! Reference trajectories with analytic derivatives through order 4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value and derivatives of order 0..=4 at one instant.
pub type Derivatives = [f64; 5];

pub const DEFAULT_RISE_TIME: f64 = 0.2;

fn default_rise_time() -> f64 {
    DEFAULT_RISE_TIME
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub time: f64,
    /// Target value reached `rise_time` after `time`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trajectory {
    Constant {
        value: f64,
    },
    /// Piecewise-constant targets joined by quintic ramps.
    Steps {
        #[serde(default)]
        initial: f64,
        steps: Vec<Step>,
        #[serde(default = "default_rise_time")]
        rise_time: f64,
    },
    Sine {
        amplitude: f64,
        /// Hz.
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory::Constant { value: 0.0 }
    }
}

/// `s(τ) = 10τ³ - 15τ⁴ + 6τ⁵` and its derivatives on `[0, 1]`.
fn quintic(tau: f64) -> Derivatives {
    if tau <= 0.0 {
        return [0.0; 5];
    }
    if tau >= 1.0 {
        return [1.0, 0.0, 0.0, 0.0, 0.0];
    }
    let t2 = tau * tau;
    let t3 = t2 * tau;
    [
        t3 * (10.0 - 15.0 * tau + 6.0 * t2),
        30.0 * t2 * (1.0 - tau).powi(2),
        60.0 * tau - 180.0 * t2 + 120.0 * t3,
        60.0 - 360.0 * tau + 360.0 * t2,
        -360.0 + 720.0 * tau,
    ]
}

impl Trajectory {
    pub fn validate(&self, field: &str) -> Result<()> {
        match self {
            Trajectory::Constant { value } => finite(field, "value", *value),
            Trajectory::Steps {
                initial,
                steps,
                rise_time,
            } => {
                finite(field, "initial", *initial)?;
                if !(rise_time.is_finite() && *rise_time > 0.0) {
                    return Err(Error::invalid(format!("{field}.rise_time"), "must be > 0"));
                }
                let mut last = f64::NEG_INFINITY;
                for s in steps {
                    finite(field, "steps.value", s.value)?;
                    if !(s.time.is_finite() && s.time >= 0.0) {
                        return Err(Error::invalid(format!("{field}.steps.time"), "must be >= 0"));
                    }
                    if s.time < last + rise_time {
                        return Err(Error::invalid(
                            format!("{field}.steps"),
                            "must be ordered in time and spaced by at least rise_time",
                        ));
                    }
                    last = s.time;
                }
                Ok(())
            }
            Trajectory::Sine {
                amplitude,
                frequency,
                phase,
                offset,
            } => {
                finite(field, "amplitude", *amplitude)?;
                finite(field, "phase", *phase)?;
                finite(field, "offset", *offset)?;
                if !(frequency.is_finite() && *frequency >= 0.0) {
                    return Err(Error::invalid(format!("{field}.frequency"), "must be >= 0"));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, t: f64) -> Derivatives {
        match self {
            Trajectory::Constant { value } => [*value, 0.0, 0.0, 0.0, 0.0],
            Trajectory::Steps {
                initial,
                steps,
                rise_time,
            } => {
                let mut out = [*initial, 0.0, 0.0, 0.0, 0.0];
                let mut prev = *initial;
                for s in steps {
                    let jump = s.value - prev;
                    prev = s.value;
                    let shape = quintic((t - s.time) / rise_time);
                    let mut scale = jump;
                    for (o, d) in out.iter_mut().zip(shape) {
                        *o += scale * d;
                        scale /= rise_time;
                    }
                }
                out
            }
            Trajectory::Sine {
                amplitude,
                frequency,
                phase,
                offset,
            } => {
                let w = 2.0 * std::f64::consts::PI * frequency;
                let (s, c) = (w * t + phase).sin_cos();
                let a = *amplitude;
                [
                    offset + a * s,
                    a * w * c,
                    -a * w * w * s,
                    -a * w.powi(3) * c,
                    a * w.powi(4) * s,
                ]
            }
        }
    }

    /// Start times of discrete changes (for settling analysis).
    pub fn event_times(&self) -> Vec<f64> {
        match self {
            Trajectory::Steps { steps, .. } => steps.iter().map(|s| s.time).collect(),
            _ => Vec::new(),
        }
    }
}

fn finite(field: &str, name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{field}.{name}"), "must be finite"))
    }
}
