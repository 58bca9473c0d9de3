//! Optimal status updating for an energy-harvesting sensor that can fall back
//! on paid reliable energy.
//!
//! The sensor tracks its destination's age of information (AoI) and its
//! battery level; each slot it either idles or transmits an update over an
//! erasure channel. The long-run average of `AoI + omega * reliable cost` is
//! minimised by relative value iteration, and the resulting policy has one
//! AoI threshold per battery level.
//!
//! - [`model`]: states, kernel, cost and a seeded stepper.
//! - [`solver`]: relative value iteration and threshold extraction.
//! - [`structure`]: numerical certificates on converged tables.
//! - [`policies`]: baseline and table policies.
//! - [`eval`]: Monte Carlo, exact stationary and brute-force evaluation.

pub mod error;
pub mod eval;
pub mod model;
pub mod policies;
pub mod solver;
pub mod structure;

pub use error::{Error, Result};
pub use eval::{EvalReport, Method, SimConfig};
pub use model::{Action, RandomStream, State, StepOutcome, SystemParams, TransitionDist};
pub use policies::{PolicySpec, PolicyTable};
pub use solver::{QTable, Solution, SolverConfig, Threshold, ThresholdPolicy, ValueTable};
pub use structure::StructureReport;
