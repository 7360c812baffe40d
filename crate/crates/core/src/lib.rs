//! Robust motion control of robots driven by series elastic actuators.
//!
//! Each joint is modeled as a fourth-order linear system with a lumped
//! disturbance. A second-order disturbance observer estimates that
//! disturbance and its first two derivatives, and a Brunovsky-form state
//! feedback rejects it. The crate also contains a multibody plant used as
//! ground truth, a Lyapunov-based gain certificate and a fixed-step
//! simulator.

pub mod brunovsky;
pub mod controller;
pub mod dob;
pub mod error;
pub mod integrate;
pub mod lyapunov;
pub mod model;
pub mod plant;
pub mod scenario;
pub mod sim;
pub mod trajectory;

pub use controller::{ControlMode, Controller, ControllerConfig, ForceGains, JointController};
pub use error::{Error, Result};
pub use model::{build_nominal_model, JointParams, JointVector, NominalModel};
pub use scenario::{builtin_campaign, builtin_campaigns, parse_scenario, Scenario};
pub use sim::{certify, run, Metrics, Telemetry};
pub use trajectory::Trajectory;
