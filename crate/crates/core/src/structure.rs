//! Numerical certificates for the structural properties of converged value
//! and action-value tables.
//!
//! Every check reports the smallest margin it saw; a property holds when that
//! margin is at least `-tol`. Forward differences that would touch the
//! `aoi = aoi_cap` row are skipped, since saturation distorts increments there.

use serde::{Deserialize, Serialize};

use crate::model::{Action, State, SystemParams};
use crate::solver::{QTable, ValueTable};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Result of one inequality family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub passed: bool,
    /// Smallest margin over all tested pairs (`+inf` if nothing was tested).
    pub worst_margin: f64,
    /// Pair of states that produced `worst_margin`.
    pub witness: Option<(State, State)>,
}

impl PropertyCheck {
    fn run(tol: f64, pairs: impl Iterator<Item = (State, State, f64)>) -> Self {
        let mut worst = f64::INFINITY;
        let mut witness = None;
        for (a, b, margin) in pairs {
            if margin < worst {
                worst = margin;
                witness = Some((a, b));
            }
        }
        Self {
            passed: worst >= -tol,
            worst_margin: worst,
            witness,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    /// `V(aoi, q) <= V(aoi + 1, q)`.
    pub monotone_in_aoi: PropertyCheck,
    /// `V(aoi, q) >= V(aoi, q + 1)`.
    pub monotone_in_battery: PropertyCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementCheck {
    /// `V(aoi + 1, q) - V(aoi, q) >= 1`.
    pub increment_lower_bound: PropertyCheck,
    /// `V(aoi + 1, q + 1) + p V(aoi, q) >= V(aoi, q + 1) + p V(aoi + 1, q)`.
    pub cross_increment: PropertyCheck,
}

/// Monotonicity of `V` in AoI (nondecreasing) and battery (nonincreasing).
pub fn check_monotonicity(v: &ValueTable, params: &SystemParams, tol: f64) -> MonotonicityCheck {
    let monotone_in_aoi = PropertyCheck::run(
        tol,
        interior_aoi_pairs(params).map(|(lo, hi)| (lo, hi, v.get(hi) - v.get(lo))),
    );
    let monotone_in_battery = PropertyCheck::run(
        tol,
        params
            .states()
            .filter(|s| s.battery < params.battery_cap)
            .map(|s| {
                let up = State::new(s.aoi, s.battery + 1);
                (s, up, v.get(s) - v.get(up))
            }),
    );
    MonotonicityCheck {
        monotone_in_aoi,
        monotone_in_battery,
    }
}

/// Unit lower bound on AoI increments and the battery cross-increment
/// inequality.
pub fn check_increments(v: &ValueTable, params: &SystemParams, tol: f64) -> IncrementCheck {
    let p = params.p;
    let increment_lower_bound = PropertyCheck::run(
        tol,
        interior_aoi_pairs(params).map(|(lo, hi)| (lo, hi, v.get(hi) - v.get(lo) - 1.0)),
    );
    let cross_increment = PropertyCheck::run(
        tol,
        interior_aoi_pairs(params)
            .filter(|(lo, _)| lo.battery < params.battery_cap)
            .map(|(lo, hi)| {
                let lo_up = State::new(lo.aoi, lo.battery + 1);
                let hi_up = State::new(hi.aoi, hi.battery + 1);
                let margin = v.get(hi_up) + p * v.get(lo) - v.get(lo_up) - p * v.get(hi);
                (lo, hi_up, margin)
            }),
    );
    IncrementCheck {
        increment_lower_bound,
        cross_increment,
    }
}

/// `Q(aoi, q, idle) - Q(aoi, q, transmit)` nondecreasing in AoI for every
/// battery level, over `aoi < aoi_cap - 1`.
pub fn check_submodularity(q: &QTable, params: &SystemParams, tol: f64) -> PropertyCheck {
    PropertyCheck::run(
        tol,
        interior_aoi_pairs(params).map(|(lo, hi)| (lo, hi, q.advantage(hi) - q.advantage(lo))),
    )
}

/// `(aoi, q), (aoi + 1, q)` with `aoi + 1 < aoi_cap`.
fn interior_aoi_pairs(params: &SystemParams) -> impl Iterator<Item = (State, State)> + '_ {
    (0..=params.battery_cap).flat_map(move |q| {
        (1..params.aoi_cap.saturating_sub(1))
            .map(move |aoi| (State::new(aoi, q), State::new(aoi + 1, q)))
    })
}

/// Summary of all five certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub monotone_in_aoi: bool,
    pub monotone_in_battery: bool,
    pub increment_lower_bound: bool,
    pub cross_increment: bool,
    pub submodular_q: bool,
    /// Most negative margin observed across all checks.
    pub worst_violation: f64,
    pub witness: Option<(State, State)>,
    pub tolerance: f64,
}

impl StructureReport {
    pub fn from_checks(
        mono: &MonotonicityCheck,
        inc: &IncrementCheck,
        sub: &PropertyCheck,
        tol: f64,
    ) -> Self {
        let checks = [
            mono.monotone_in_aoi,
            mono.monotone_in_battery,
            inc.increment_lower_bound,
            inc.cross_increment,
            *sub,
        ];
        let worst = checks
            .iter()
            .min_by(|a, b| a.worst_margin.total_cmp(&b.worst_margin))
            .expect("five checks");
        Self {
            monotone_in_aoi: mono.monotone_in_aoi.passed,
            monotone_in_battery: mono.monotone_in_battery.passed,
            increment_lower_bound: inc.increment_lower_bound.passed,
            cross_increment: inc.cross_increment.passed,
            submodular_q: sub.passed,
            worst_violation: worst.worst_margin,
            witness: worst.witness,
            tolerance: tol,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.monotone_in_aoi
            && self.monotone_in_battery
            && self.increment_lower_bound
            && self.cross_increment
            && self.submodular_q
    }

    pub fn to_json(&self) -> String {
        // infinite margins (empty checks) become null
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs every certificate on a value table and its action values.
pub fn check_all(v: &ValueTable, q: &QTable, tol: f64) -> StructureReport {
    let params = v.params;
    let mono = check_monotonicity(v, &params, tol);
    let inc = check_increments(v, &params, tol);
    let sub = check_submodularity(q, &params, tol);
    StructureReport::from_checks(&mono, &inc, &sub, tol)
}

/// Submodularity margin at `(aoi, q)` recomputed from a raw action pair,
/// exposed so callers can cross-check [`QTable`] against other sources.
pub fn submodularity_margin(q: &QTable, s: State) -> f64 {
    let hi = State::new(s.aoi + 1, s.battery);
    (q.get(hi, Action::Idle) - q.get(hi, Action::Transmit))
        - (q.get(s, Action::Idle) - q.get(s, Action::Transmit))
}
