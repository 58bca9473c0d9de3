//! MDP primitives: parameters, states, actions, the exact transition kernel,
//! the one-step cost and a seeded stochastic stepper.
//!
//! A state is the pair (destination AoI, battery level). The AoI dimension is
//! countably infinite in the underlying process; for dynamic programming and
//! exact evaluation it is truncated at `aoi_cap`, with increments saturating
//! there (`min(aoi + 1, aoi_cap)`).

use arrayvec::ArrayVec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic seeded random stream used by every stochastic routine.
pub type RandomStream = ChaCha8Rng;

/// Builds the random stream `stream_id` of the family keyed by `seed`.
///
/// Different stream ids give non-overlapping ChaCha streams, so replications
/// can be run in any order (or in parallel) with identical results.
pub fn random_stream(seed: u64, stream_id: u64) -> RandomStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// All model constants plus the AoI truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Erasure probability of the channel.
    pub p: f64,
    /// Per-slot energy-arrival probability.
    #[serde(rename = "lambda")]
    pub lambda_eh: f64,
    /// Weight of the reliable-energy cost.
    pub omega: f64,
    /// Cost of one update powered by reliable energy.
    pub c_r: f64,
    /// Battery capacity `B`.
    pub battery_cap: u32,
    /// Largest AoI represented in the truncated state space.
    pub aoi_cap: u32,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            p: 0.2,
            lambda_eh: 0.5,
            omega: 10.0,
            c_r: 2.0,
            battery_cap: 20,
            aoi_cap: 200,
        }
    }
}

impl SystemParams {
    /// Checks the ranges every routine relies on. Degenerate channels
    /// (`p = 0` or `p = 1`) and `omega = 0` pass here; see
    /// [`SystemParams::validate_for_solve`] for the stricter solver contract.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p", self.p),
            ("lambda", self.lambda_eh),
            ("omega", self.omega),
            ("c_r", self.c_r),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "{name} must be finite, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParams(format!(
                "p must lie in [0, 1], got {}",
                self.p
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda_eh) {
            return Err(Error::InvalidParams(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda_eh
            )));
        }
        if self.omega < 0.0 {
            return Err(Error::InvalidParams(format!(
                "omega must be >= 0, got {}",
                self.omega
            )));
        }
        if self.c_r < 0.0 {
            return Err(Error::InvalidParams(format!(
                "c_r must be >= 0, got {}",
                self.c_r
            )));
        }
        if self.battery_cap < 1 {
            return Err(Error::InvalidParams("battery_cap must be >= 1".into()));
        }
        if self.aoi_cap < 2 {
            return Err(Error::InvalidParams(format!(
                "aoi_cap must be >= 2, got {}",
                self.aoi_cap
            )));
        }
        Ok(())
    }

    /// Solver contract: `0 < p < 1` and `omega > 0`. `allow_zero_omega`
    /// admits the `omega = 0` limit used in tests.
    pub fn validate_for_solve(&self, allow_zero_omega: bool) -> Result<()> {
        self.validate()?;
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidParams(format!(
                "solving requires 0 < p < 1, got {}",
                self.p
            )));
        }
        if self.omega == 0.0 && !allow_zero_omega {
            return Err(Error::InvalidParams(
                "solving requires omega > 0 (omega = 0 only in test mode)".into(),
            ));
        }
        Ok(())
    }

    pub fn with_aoi_cap(mut self, aoi_cap: u32) -> Self {
        self.aoi_cap = aoi_cap;
        self
    }

    /// Number of states in the truncated grid.
    pub fn num_states(&self) -> usize {
        self.aoi_cap as usize * (self.battery_cap as usize + 1)
    }

    /// Dense index: battery-major, AoI-minor, both ascending.
    #[inline]
    pub fn index_of(&self, s: State) -> usize {
        s.battery as usize * self.aoi_cap as usize + (s.aoi as usize - 1)
    }

    #[inline]
    pub fn state_at(&self, idx: usize) -> State {
        let cap = self.aoi_cap as usize;
        State::new((idx % cap) as u32 + 1, (idx / cap) as u32)
    }

    /// Every truncated state in index order.
    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.num_states()).map(move |i| self.state_at(i))
    }

    pub fn check_state(&self, s: State) -> Result<()> {
        if s.aoi < 1 || s.aoi > self.aoi_cap || s.battery > self.battery_cap {
            return Err(Error::InvalidState {
                aoi: s.aoi,
                battery: s.battery,
                aoi_cap: self.aoi_cap,
                battery_cap: self.battery_cap,
            });
        }
        Ok(())
    }
}

/// (destination AoI, battery level).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub aoi: u32,
    pub battery: u32,
}

impl State {
    pub const fn new(aoi: u32, battery: u32) -> Self {
        Self { aoi, battery }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Idle = 0,
    Transmit = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Idle, Action::Transmit];

    #[inline]
    pub fn is_transmit(self) -> bool {
        matches!(self, Action::Transmit)
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Exact successor distribution of one (state, action) pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionDist {
    entries: ArrayVec<(State, f64), 4>,
}

impl TransitionDist {
    fn add(&mut self, s: State, prob: f64) {
        if prob == 0.0 {
            return;
        }
        if let Some(e) = self.entries.iter_mut().find(|(t, _)| *t == s) {
            e.1 += prob;
        } else {
            self.entries.push((s, prob));
        }
    }

    pub fn entries(&self) -> &[(State, f64)] {
        &self.entries
    }

    pub fn prob_of(&self, s: State) -> f64 {
        self.entries
            .iter()
            .find(|(t, _)| *t == s)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    /// Expectation of `f` over the successor distribution.
    #[inline]
    pub fn expect(&self, mut f: impl FnMut(State) -> f64) -> f64 {
        self.entries.iter().map(|&(s, p)| p * f(s)).sum()
    }
}

/// Everything observable about one simulated slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: State,
    pub delivered: bool,
    pub energy_arrived: bool,
    /// Reliable energy paid this slot: `c_r` or 0.
    pub reliable_cost_paid: f64,
    /// `aoi + omega * reliable_cost_paid`.
    pub stage_cost: f64,
}

/// Battery level after paying for `a` but before the slot's arrival is
/// credited. A transmission from an empty battery draws on reliable energy.
#[inline]
fn battery_after_use(s: State, a: Action) -> u32 {
    if a.is_transmit() && s.battery > 0 {
        s.battery - 1
    } else {
        s.battery
    }
}

/// Exact successor distribution of `(s, a)` on the truncated grid.
pub fn transition(s: State, a: Action, params: &SystemParams) -> Result<TransitionDist> {
    params.check_state(s)?;
    Ok(transition_unchecked(s, a, params))
}

#[inline]
pub(crate) fn transition_unchecked(s: State, a: Action, params: &SystemParams) -> TransitionDist {
    let lambda = params.lambda_eh;
    let aged = (s.aoi + 1).min(params.aoi_cap);
    let kept = battery_after_use(s, a);
    let charged = (kept + 1).min(params.battery_cap);

    let mut dist = TransitionDist::default();
    match a {
        Action::Idle => {
            dist.add(State::new(aged, charged), lambda);
            dist.add(State::new(aged, kept), 1.0 - lambda);
        }
        Action::Transmit => {
            let p = params.p;
            dist.add(State::new(aged, charged), p * lambda);
            dist.add(State::new(1, charged), (1.0 - p) * lambda);
            dist.add(State::new(aged, kept), p * (1.0 - lambda));
            dist.add(State::new(1, kept), (1.0 - p) * (1.0 - lambda));
        }
    }
    dist
}

/// Reliable energy paid for taking `a` in `s`.
#[inline]
pub fn reliable_cost(s: State, a: Action, params: &SystemParams) -> f64 {
    if a.is_transmit() && s.battery == 0 {
        params.c_r
    } else {
        0.0
    }
}

/// One-step cost `aoi + omega * c_r * a * (1 - u(q))`.
pub fn stage_cost(s: State, a: Action, params: &SystemParams) -> Result<f64> {
    params.check_state(s)?;
    Ok(stage_cost_unchecked(s, a, params))
}

#[inline]
pub(crate) fn stage_cost_unchecked(s: State, a: Action, params: &SystemParams) -> f64 {
    s.aoi as f64 + params.omega * reliable_cost(s, a, params)
}

/// Draws one slot of the truncated chain; the law of `next_state` is exactly
/// [`transition`].
pub fn sample_step<R: Rng + ?Sized>(
    s: State,
    a: Action,
    params: &SystemParams,
    rng: &mut R,
) -> StepOutcome {
    step(s, a, params, rng, params.aoi_cap)
}

/// Like [`sample_step`] but without AoI saturation: the simulated chain is
/// the untruncated process.
pub fn sample_step_untruncated<R: Rng + ?Sized>(
    s: State,
    a: Action,
    params: &SystemParams,
    rng: &mut R,
) -> StepOutcome {
    step(s, a, params, rng, u32::MAX)
}

#[inline]
fn step<R: Rng + ?Sized>(
    s: State,
    a: Action,
    params: &SystemParams,
    rng: &mut R,
    aoi_limit: u32,
) -> StepOutcome {
    let energy_arrived = rng.random::<f64>() < params.lambda_eh;
    let delivered = a.is_transmit() && rng.random::<f64>() >= params.p;

    let kept = battery_after_use(s, a);
    let battery = if energy_arrived {
        (kept + 1).min(params.battery_cap)
    } else {
        kept
    };
    let aoi = if delivered {
        1
    } else {
        s.aoi.saturating_add(1).min(aoi_limit)
    };
    let paid = reliable_cost(s, a, params);
    StepOutcome {
        next_state: State::new(aoi, battery),
        delivered,
        energy_arrived,
        reliable_cost_paid: paid,
        stage_cost: s.aoi as f64 + params.omega * paid,
    }
}
