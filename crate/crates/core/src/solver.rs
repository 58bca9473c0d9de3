//! Relative value iteration for the average-cost optimality equation and
//! extraction of the per-battery transmit thresholds.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{stage_cost_unchecked, transition_unchecked, Action, State, SystemParams};
use crate::policies::PolicyTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop once the span of `T h - h` is at most this.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Anchor state whose relative value is pinned to 0. `None` means
    /// `(1, battery_cap)`.
    pub reference_state: Option<State>,
    /// Uniform initial value.
    pub init_value: f64,
    /// Accept `omega = 0`.
    pub allow_zero_omega: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-9,
            max_iters: 200_000,
            reference_state: None,
            init_value: 0.0,
            allow_zero_omega: false,
        }
    }
}

impl SolverConfig {
    pub fn reference(&self, params: &SystemParams) -> State {
        self.reference_state
            .unwrap_or(State::new(1, params.battery_cap))
    }

    fn validate(&self, params: &SystemParams) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParams("max_iters must be >= 1".into()));
        }
        if !self.init_value.is_finite() {
            return Err(Error::InvalidParams("init_value must be finite".into()));
        }
        params.check_state(self.reference(params))
    }
}

/// Relative values `V` on the truncated grid plus the average-cost estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub params: SystemParams,
    values: Vec<f64>,
    /// Optimal long-run average cost per slot.
    pub gain: f64,
    pub reference: State,
    pub iterations: usize,
    /// Span of the final value difference.
    pub span: f64,
}

impl ValueTable {
    /// Wraps a dense value vector in index order of `params`. Used for
    /// hand-built or reloaded tables; the reference state is `(1, B)` and no
    /// re-anchoring is done.
    pub fn from_values(params: SystemParams, values: Vec<f64>, gain: f64) -> Result<Self> {
        params.validate()?;
        if values.len() != params.num_states() {
            return Err(Error::InvalidParams(format!(
                "value vector has {} entries, grid has {}",
                values.len(),
                params.num_states()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(
                "value table contains non-finite entries".into(),
            ));
        }
        Ok(Self {
            reference: State::new(1, params.battery_cap),
            params,
            values,
            gain,
            iterations: 0,
            span: 0.0,
        })
    }

    /// Builds a table from a function of the state.
    pub fn from_fn(params: SystemParams, f: impl Fn(State) -> f64) -> Result<Self> {
        let values = params.states().map(f).collect();
        Self::from_values(params, values, 0.0)
    }

    #[inline]
    pub fn get(&self, s: State) -> f64 {
        self.values[self.params.index_of(s)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Writes `delta,q,value` rows in index order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["delta", "q", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            let s = self.params.state_at(i);
            wtr.write_record([s.aoi.to_string(), s.battery.to_string(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a table written by [`ValueTable::write_csv`]. Every grid state
    /// of `params` must appear exactly once.
    pub fn read_csv<R: Read>(params: SystemParams, r: R) -> Result<Self> {
        params.validate()?;
        #[derive(Deserialize)]
        struct Row {
            delta: u32,
            q: u32,
            value: f64,
        }
        let mut values = vec![f64::NAN; params.num_states()];
        let mut rdr = csv::Reader::from_reader(r);
        for row in rdr.deserialize() {
            let row: Row = row?;
            let s = State::new(row.delta, row.q);
            params.check_state(s)?;
            let idx = params.index_of(s);
            if !values[idx].is_nan() {
                return Err(Error::Parse(format!("duplicate row for {s:?}")));
            }
            if !row.value.is_finite() {
                return Err(Error::Parse(format!("non-finite value for {s:?}")));
            }
            values[idx] = row.value;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Parse(format!(
                "missing row for {:?}",
                params.state_at(i)
            )));
        }
        Self::from_values(params, values, f64::NAN)
    }
}

/// Action values `Q(x, a) = C(x, a) + sum_x' P(x'|x, a) V(x')`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub params: SystemParams,
    q: Vec<[f64; 2]>,
}

impl QTable {
    pub fn from_values(v: &ValueTable) -> Self {
        let params = v.params;
        let q = params
            .states()
            .map(|s| {
                Action::ALL.map(|a| {
                    stage_cost_unchecked(s, a, &params)
                        + transition_unchecked(s, a, &params).expect(|t| v.get(t))
                })
            })
            .collect();
        Self { params, q }
    }

    #[inline]
    pub fn get(&self, s: State, a: Action) -> f64 {
        self.q[self.params.index_of(s)][a.index()]
    }

    /// `Q(x, idle) - Q(x, transmit)`: positive where transmitting is better.
    #[inline]
    pub fn advantage(&self, s: State) -> f64 {
        let [idle, tx] = self.q[self.params.index_of(s)];
        idle - tx
    }

    #[inline]
    pub fn min_value(&self, s: State) -> f64 {
        let [idle, tx] = self.q[self.params.index_of(s)];
        idle.min(tx)
    }
}

/// Flattened kernel: per (state, action) a slice of `(successor index, prob)`.
struct Kernel {
    offsets: Vec<usize>,
    succ: Vec<(usize, f64)>,
    cost: Vec<f64>,
}

impl Kernel {
    fn build(params: &SystemParams) -> Self {
        let n = params.num_states();
        let mut offsets = Vec::with_capacity(2 * n + 1);
        let mut succ = Vec::with_capacity(8 * n);
        let mut cost = Vec::with_capacity(2 * n);
        offsets.push(0);
        for s in params.states() {
            for a in Action::ALL {
                let d = transition_unchecked(s, a, params);
                succ.extend(d.entries().iter().map(|&(t, p)| (params.index_of(t), p)));
                offsets.push(succ.len());
                cost.push(stage_cost_unchecked(s, a, params));
            }
        }
        Self {
            offsets,
            succ,
            cost,
        }
    }

    #[inline]
    fn backup(&self, row: usize, h: &[f64]) -> f64 {
        let cont: f64 = self.succ[self.offsets[row]..self.offsets[row + 1]]
            .iter()
            .map(|&(j, p)| p * h[j])
            .sum();
        self.cost[row] + cont
    }
}

/// Relative value iteration. Each synchronous sweep computes
/// `w = T h`, stops when `span(w - h) <= epsilon`, and otherwise sets
/// `h = w - w(reference)`. The returned gain is the midpoint of the final
/// difference's range, which brackets the optimal average cost.
pub fn solve(params: &SystemParams, cfg: &SolverConfig) -> Result<(ValueTable, QTable)> {
    params.validate_for_solve(cfg.allow_zero_omega)?;
    cfg.validate(params)?;

    let kernel = Kernel::build(params);
    let n = params.num_states();
    let reference = cfg.reference(params);
    let ref_idx = params.index_of(reference);

    let mut h = vec![cfg.init_value; n];
    let anchor = h[ref_idx];
    h.iter_mut().for_each(|v| *v -= anchor);
    let mut w = vec![0.0; n];
    let mut span = f64::INFINITY;

    for k in 1..=cfg.max_iters {
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for i in 0..n {
            let idle = kernel.backup(2 * i, &h);
            let tx = kernel.backup(2 * i + 1, &h);
            let best = idle.min(tx);
            w[i] = best;
            let d = best - h[i];
            hi = hi.max(d);
            lo = lo.min(d);
        }
        span = hi - lo;
        let anchor = w[ref_idx];
        for (hv, wv) in h.iter_mut().zip(&w) {
            *hv = wv - anchor;
        }
        if span <= cfg.epsilon {
            let values = ValueTable {
                params: *params,
                values: h,
                gain: 0.5 * (hi + lo),
                reference,
                iterations: k,
                span,
            };
            let q = QTable::from_values(&values);
            return Ok((values, q));
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iters,
        span,
    })
}

/// Per-state argmin of `Q`; ties go to idle.
pub fn greedy_policy(q: &QTable) -> PolicyTable {
    let params = q.params;
    PolicyTable::from_fn(&params, |s| argmin(q, s))
}

#[inline]
fn argmin(q: &QTable, s: State) -> Action {
    if q.get(s, Action::Idle) <= q.get(s, Action::Transmit) {
        Action::Idle
    } else {
        Action::Transmit
    }
}

/// Policy built the threshold way: scanning AoI upward at each battery
/// level, once transmit is chosen every larger AoI inherits it without
/// consulting `Q` again.
pub fn threshold_short_circuit(q: &QTable) -> PolicyTable {
    let params = q.params;
    let mut table = PolicyTable::from_fn(&params, |_| Action::Idle);
    for battery in 0..=params.battery_cap {
        let mut transmitting = false;
        for aoi in 1..=params.aoi_cap {
            let s = State::new(aoi, battery);
            transmitting = transmitting || argmin(q, s).is_transmit();
            if transmitting {
                table.set(s, Action::Transmit);
            }
        }
    }
    table
}

/// A per-battery AoI threshold, or no transmission anywhere on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Option<u32>", into = "Option<u32>")]
pub enum Threshold {
    At(u32),
    Never,
}

impl From<Option<u32>> for Threshold {
    fn from(v: Option<u32>) -> Self {
        v.map_or(Threshold::Never, Threshold::At)
    }
}

impl From<Threshold> for Option<u32> {
    fn from(t: Threshold) -> Self {
        match t {
            Threshold::At(v) => Some(v),
            Threshold::Never => None,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::At(v) => write!(f, "{v}"),
            Threshold::Never => f.write_str("never"),
        }
    }
}

/// Transmit iff `aoi >= thresholds[battery]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub battery_cap: u32,
    pub aoi_cap: u32,
    pub thresholds: Vec<Threshold>,
}

impl ThresholdPolicy {
    pub fn new(battery_cap: u32, aoi_cap: u32, thresholds: Vec<Threshold>) -> Result<Self> {
        if thresholds.len() != battery_cap as usize + 1 {
            return Err(Error::InvalidParams(format!(
                "expected {} thresholds, got {}",
                battery_cap + 1,
                thresholds.len()
            )));
        }
        if thresholds.contains(&Threshold::At(0)) {
            return Err(Error::InvalidParams("thresholds must be >= 1".into()));
        }
        Ok(Self {
            battery_cap,
            aoi_cap,
            thresholds,
        })
    }

    /// Battery levels above `battery_cap` use the last threshold.
    pub fn action(&self, s: State) -> Action {
        let q = (s.battery as usize).min(self.thresholds.len() - 1);
        match self.thresholds[q] {
            Threshold::At(t) if s.aoi >= t => Action::Transmit,
            _ => Action::Idle,
        }
    }

    pub fn finite_below(&self, cap: u32) -> bool {
        self.thresholds
            .iter()
            .all(|t| matches!(t, Threshold::At(v) if *v < cap))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let tp: Self = serde_json::from_str(s)?;
        Self::new(tp.battery_cap, tp.aoi_cap, tp.thresholds)
    }

    /// Writes `q,threshold` rows; `never` marks a level that never transmits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["q", "threshold"])?;
        for (q, t) in self.thresholds.iter().enumerate() {
            wtr.write_record([q.to_string(), t.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Reads off `Delta_q` as the smallest transmitting AoI at each battery
/// level, failing if any level is not of the form idle...idle transmit...
pub fn extract_thresholds(policy: &PolicyTable) -> Result<ThresholdPolicy> {
    let (aoi_cap, battery_cap) = (policy.aoi_cap(), policy.battery_cap());
    let mut thresholds = Vec::with_capacity(battery_cap as usize + 1);
    for battery in 0..=battery_cap {
        let first =
            (1..=aoi_cap).find(|&aoi| policy.action(State::new(aoi, battery)).is_transmit());
        match first {
            None => thresholds.push(Threshold::Never),
            Some(t) => {
                if let Some(idle_at) = (t + 1..=aoi_cap)
                    .find(|&aoi| !policy.action(State::new(aoi, battery)).is_transmit())
                {
                    return Err(Error::NotThreshold {
                        battery,
                        transmit_at: t,
                        idle_at,
                    });
                }
                thresholds.push(Threshold::At(t));
            }
        }
    }
    ThresholdPolicy::new(battery_cap, aoi_cap, thresholds)
}

/// Output of [`solve_thresholds`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub values: ValueTable,
    pub q_table: QTable,
    pub policy: PolicyTable,
    pub thresholds: ThresholdPolicy,
}

/// Solves, takes the greedy policy, confirms the threshold short-circuit
/// reproduces it, and extracts the thresholds.
pub fn solve_thresholds(params: &SystemParams, cfg: &SolverConfig) -> Result<Solution> {
    let (values, q_table) = solve(params, cfg)?;
    let policy = greedy_policy(&q_table);
    let thresholds = extract_thresholds(&policy)?;
    let short = threshold_short_circuit(&q_table);
    if let Some(s) = params
        .states()
        .find(|&s| short.action(s) != policy.action(s))
    {
        return Err(Error::ShortCircuitMismatch(s));
    }
    Ok(Solution {
        values,
        q_table,
        policy,
        thresholds,
    })
}

/// Re-solves with `aoi_cap` doubled. True iff the thresholds are identical
/// and every one of them is finite and below the original cap.
pub fn check_truncation_adequacy(
    tp: &ThresholdPolicy,
    params: &SystemParams,
    cfg: &SolverConfig,
) -> Result<bool> {
    let doubled = params.with_aoi_cap(params.aoi_cap * 2);
    let wide = solve_thresholds(&doubled, cfg)?;
    Ok(wide.thresholds.thresholds == tp.thresholds && tp.finite_below(params.aoi_cap))
}
