use thiserror::Error;

use crate::model::State;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid state (aoi={aoi}, battery={battery}) for aoi_cap={aoi_cap}, battery_cap={battery_cap}")]
    InvalidState {
        aoi: u32,
        battery: u32,
        aoi_cap: u32,
        battery_cap: u32,
    },

    #[error("value iteration did not converge in {iterations} iterations (last span {span:e})")]
    NotConverged { iterations: usize, span: f64 },

    #[error(
        "policy is not threshold-shaped at battery {battery}: transmits at aoi {transmit_at} but idles at aoi {idle_at}"
    )]
    NotThreshold {
        battery: u32,
        transmit_at: u32,
        idle_at: u32,
    },

    #[error("threshold short-circuit disagrees with full argmin at {0:?}")]
    ShortCircuitMismatch(State),

    #[error("stationary mass {mass:e} at the aoi cap {aoi_cap} exceeds {limit:e}; raise aoi_cap")]
    BoundaryMass { mass: f64, aoi_cap: u32, limit: f64 },

    #[error("policy-induced chain has {} closed classes with different average costs: {classes:?}", classes.len())]
    Reducible { classes: Vec<(State, f64)> },

    #[error("stationary iteration did not reach residual {target:e} in {sweeps} sweeps (last {residual:e})")]
    StationaryNotConverged {
        sweeps: usize,
        residual: f64,
        target: f64,
    },

    #[error("instance has {states} states; exhaustive enumeration is limited to {limit}")]
    TooLarge { states: usize, limit: usize },

    #[error("policy {0} cannot be evaluated exactly")]
    NotExactlyEvaluable(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
