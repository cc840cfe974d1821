//! Shank-angle-based assistance for a cable-driven soft ankle exoskeleton.
//!
//! The crate is organised along the data path of the controller:
//!
//! - [`gait_signals`]: IMU kinematic frames, foot-contact / foot-off detection and
//!   stance-window buffering (100 Hz).
//! - [`profile`]: the dual-Gaussian force profile over shank angle, its analytic rate,
//!   and the once-per-stride parameter estimator.
//! - [`tendon`]: the coupled human/suit "artificial tendon" length model, suit migration
//!   and stiffness identification.
//! - [`controller`]: the swing/stance state machine emitting cable velocity commands
//!   (1 kHz).
//! - [`plant`]: a deterministic simulated gait and cable/motor/load-cell plant.
//! - [`harness`]: the two-rate scheduler, experiment scenarios and metrics.

// Negated comparisons below reject NaN as well as out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod gait_signals;
pub mod harness;
pub mod plant;
pub mod profile;
pub mod tendon;

pub use controller::{
    CommandSource, Controller, ControllerConfig, Mode, SafetyStatus, VelocityCommand,
};
pub use error::{Error, Result};
pub use gait_signals::{derive_df, EventKind, GaitEvent, KinematicSample, StanceWindow};
pub use harness::{run_scenario, MetricsReport, Scenario, ScenarioConfig};
pub use plant::{Activity, GaitTemplate, PerturbationKind, PerturbationSpec};
pub use profile::{GaussianParams, RawStrideFeatures};
pub use tendon::{StiffnessFit, TendonModel};
