//! Desk-scale reproduction of a planned false-data-injection attack on a
//! Kalman-filter driven Forward Collision Warning (FCW) pipeline.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! pieces: the tracking filter, the warning/driver automaton, ground-truth
//! kinematics and crash oracles, synthetic traces and their preprocessing,
//! the convex surrogate light constraints, a dense QP solver, the MPC and
//! greedy attackers, and the experiment harness. File formats and the CLI
//! live in the `fcw-redteam` crate.
//!
//! Time steps are 1-based throughout, matching the trace files: step `t`
//! lives at index `t - 1` of every per-step vector.

#![cfg_attr(not(feature = "std"), no_std)]
// NaN-rejecting checks are written as `!(x > 0.0)` on purpose; dense
// linear algebra reads better with index loops.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod alert;
pub mod attacker;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod model;
pub mod qp;
pub mod scenario;
pub mod surrogate;

pub use alert::{classify, safe_distance, DriverState, WarningLight};
pub use attacker::{AttackConfig, AttackResult, MpcAttacker, Strategy};
pub use dynamics::{CrashReport, VehicleTrack};
pub use error::{Error, Result};
pub use model::{FilterState, KfModel, MeasurementFrame, NoiseParams, TrackState};
pub use qp::{QpProblem, QpSolution, QpStatus};
pub use scenario::{ScenarioSpec, SyntheticTrace};

/// Standard gravity used by the warning logic and the braking model (m/s²).
pub const G: f64 = 9.8;

/// Deceleration of a braking vehicle (m/s²).
pub const BRAKE_DECEL: f64 = 0.4 * G;

/// Simulation period: 20 frames per second.
pub const DEFAULT_DT: f64 = 0.05;

/// Driver reaction time in steps (1.2 s at 20 Hz).
pub const DEFAULT_REACTION_STEPS: u32 = 24;
