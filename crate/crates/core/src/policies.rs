//! Stationary policy tables and the baseline update policies.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, State, SystemParams};
use crate::solver::ThresholdPolicy;

/// Deterministic stationary policy on the truncated grid. AoI values above
/// the cap look up the cap row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTable {
    aoi_cap: u32,
    battery_cap: u32,
    actions: Vec<Action>,
}

impl PolicyTable {
    pub fn from_fn(params: &SystemParams, f: impl Fn(State) -> Action) -> Self {
        Self {
            aoi_cap: params.aoi_cap,
            battery_cap: params.battery_cap,
            actions: params.states().map(f).collect(),
        }
    }

    /// Policy whose `i`-th state (in grid index order) transmits iff bit `i`
    /// of `mask` is set.
    pub fn from_mask(params: &SystemParams, mask: u64) -> Self {
        Self::from_fn(params, |s| {
            if mask >> params.index_of(s) & 1 == 1 {
                Action::Transmit
            } else {
                Action::Idle
            }
        })
    }

    #[inline]
    fn index(&self, s: State) -> usize {
        let aoi = s.aoi.clamp(1, self.aoi_cap);
        let q = s.battery.min(self.battery_cap);
        q as usize * self.aoi_cap as usize + (aoi as usize - 1)
    }

    #[inline]
    pub fn action(&self, s: State) -> Action {
        self.actions[self.index(s)]
    }

    pub fn set(&mut self, s: State, a: Action) {
        let i = self.index(s);
        self.actions[i] = a;
    }

    pub fn aoi_cap(&self) -> u32 {
        self.aoi_cap
    }

    pub fn battery_cap(&self) -> u32 {
        self.battery_cap
    }

    pub fn transmit_count(&self) -> usize {
        self.actions.iter().filter(|a| a.is_transmit()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    /// Transmit every slot.
    ZeroWait,
    /// Transmit iff `t mod period == phase`.
    Periodic {
        period: u32,
        phase: u32,
    },
    /// Transmit with probability `p_tx` every slot.
    Randomized {
        p_tx: f64,
    },
    /// Transmit iff the battery is nonempty.
    EnergyFirst,
    Threshold(ThresholdPolicy),
    Table(PolicyTable),
}

impl PolicySpec {
    pub fn periodic(period: u32) -> Self {
        PolicySpec::Periodic { period, phase: 0 }
    }

    pub fn randomized() -> Self {
        PolicySpec::Randomized { p_tx: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicySpec::Periodic { period, phase } if period == 0 || phase >= period => {
                Err(Error::InvalidParams(format!(
                    "periodic policy needs 0 <= phase < period, got {phase}/{period}"
                )))
            }
            PolicySpec::Randomized { p_tx } if !(0.0..=1.0).contains(&p_tx) => {
                Err(Error::InvalidParams(format!(
                    "randomized policy needs p_tx in [0, 1], got {p_tx}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Parses `zero-wait`, `periodic:<period>[:<phase>]`, `random[:<p>]`,
    /// `energy-first` and `threshold:<file.json>`.
    pub fn parse(text: &str) -> Result<Self> {
        let (head, arg) = match text.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (text, None),
        };
        let num = |s: &str| -> Result<u32> {
            s.parse()
                .map_err(|_| Error::Parse(format!("bad integer {s:?} in policy {text:?}")))
        };
        let spec = match (head, arg) {
            ("zero-wait", None) => PolicySpec::ZeroWait,
            ("energy-first", None) => PolicySpec::EnergyFirst,
            ("random", None) => PolicySpec::randomized(),
            ("random", Some(p)) => PolicySpec::Randomized {
                p_tx: p
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad probability in policy {text:?}")))?,
            },
            ("periodic", Some(rest)) => match rest.split_once(':') {
                Some((period, phase)) => PolicySpec::Periodic {
                    period: num(period)?,
                    phase: num(phase)?,
                },
                None => PolicySpec::periodic(num(rest)?),
            },
            ("threshold", Some(path)) => {
                let text = std::fs::read_to_string(Path::new(path))?;
                PolicySpec::Threshold(ThresholdPolicy::from_json(&text)?)
            }
            _ => return Err(Error::Parse(format!("unknown policy {text:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Stateless in time and deterministic; Periodic and Randomized need an
    /// augmented or mixed kernel for exact evaluation.
    pub fn is_markov_stationary(&self) -> bool {
        !matches!(
            self,
            PolicySpec::Periodic { .. } | PolicySpec::Randomized { .. }
        )
    }

    /// Action at state `s` in slot `t`.
    pub fn decide<R: Rng + ?Sized>(&self, s: State, t: u64, rng: &mut R) -> Action {
        let transmit = match self {
            PolicySpec::ZeroWait => true,
            PolicySpec::Periodic { period, phase } => t % *period as u64 == *phase as u64,
            PolicySpec::Randomized { p_tx } => rng.random::<f64>() < *p_tx,
            PolicySpec::EnergyFirst => s.battery > 0,
            PolicySpec::Threshold(tp) => return tp.action(s),
            PolicySpec::Table(pt) => return pt.action(s),
        };
        if transmit {
            Action::Transmit
        } else {
            Action::Idle
        }
    }

    /// Deterministic action of a Markov stationary policy.
    pub(crate) fn stationary_action(&self, s: State) -> Option<Action> {
        match self {
            PolicySpec::ZeroWait => Some(Action::Transmit),
            PolicySpec::EnergyFirst => Some(if s.battery > 0 {
                Action::Transmit
            } else {
                Action::Idle
            }),
            PolicySpec::Threshold(tp) => Some(tp.action(s)),
            PolicySpec::Table(pt) => Some(pt.action(s)),
            PolicySpec::Periodic { .. } | PolicySpec::Randomized { .. } => None,
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::ZeroWait => f.write_str("zero-wait"),
            PolicySpec::Periodic { period, phase: 0 } => write!(f, "periodic:{period}"),
            PolicySpec::Periodic { period, phase } => write!(f, "periodic:{period}:{phase}"),
            PolicySpec::Randomized { p_tx } => write!(f, "random:{p_tx}"),
            PolicySpec::EnergyFirst => f.write_str("energy-first"),
            PolicySpec::Threshold(_) => f.write_str("threshold"),
            PolicySpec::Table(_) => f.write_str("table"),
        }
    }
}
