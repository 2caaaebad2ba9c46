//! Mass-conservative radial solver for the fully parabolic attraction-repulsion
//! chemotaxis system on a ball, with its Keller-Segel reduction, the associated
//! energy and dissipation functionals, blow-up class membership and blow-up
//! diagnostics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod field;
pub mod grid;
pub mod initial_data;
pub mod operators;

pub use analysis::{BlowupReport, ErrorSeries, Verdict};
pub use dynamics::{
    integrate, FullState, Observer, Params, ReducedState, SolverState, StateRecorder, StepControl,
    StepInfo, TerminationReason, Trajectory,
};
pub use energy::{EnergyLedger, EnergyRecord};
pub use error::{Error, Result};
pub use field::{FaceField, RadialField};
pub use grid::{GridSpec, RadialGrid};
pub use initial_data::{ClassThresholds, DriveOptions, DriveOutcome, MembershipReport};
