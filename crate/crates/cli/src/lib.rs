//! Batch front-end for the AoI / backup-energy MDP: single-point solves with
//! artifact dumps, structure re-checks of saved artifacts, policy evaluation
//! and parameter sweeps that emit plot-ready CSV.

pub mod artifacts;
pub mod error;
pub mod sweep;

pub use error::CliError;
pub use sweep::{run_sweep, Axis, PolicyChoice, ResultRow, SweepSpec};
