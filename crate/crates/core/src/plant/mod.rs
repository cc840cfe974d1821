//! Deterministic simulated world: gait kinematics, belt-speed perturbations and the
//! cable/motor/load-cell plant.

pub mod cable;
pub mod gait;
pub mod perturb;

pub use cable::{migration_after, PlantConfig, PlantOutput, PlantState};
pub use gait::{Activity, FrameAngles, GaitTemplate};
pub use perturb::{
    phase_advance, ClockTick, GaitClock, PerturbationKind, PerturbationSpec, SpeedRamp,
};
