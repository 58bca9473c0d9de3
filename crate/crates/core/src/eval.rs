//! Long-run average cost of a policy, three ways: seeded Monte Carlo on the
//! untruncated process, exact stationary analysis of the truncated chain, and
//! exhaustive enumeration of deterministic stationary policies on tiny grids.

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::{
    random_stream, reliable_cost, sample_step_untruncated, transition_unchecked, Action, State,
    SystemParams,
};
use crate::policies::{PolicySpec, PolicyTable};

/// Largest stationary mass tolerated on the `aoi = aoi_cap` row.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-9;
/// L1 residual `||pi P - pi||` at which the stationary iteration stops.
pub const STATIONARY_RESIDUAL: f64 = 1e-12;
/// Largest grid [`enumerate_optimal`] accepts.
pub const ENUMERATION_LIMIT: usize = 24;

const MAX_SWEEPS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Slots per replication.
    pub horizon: u64,
    pub replications: usize,
    /// Leading slots excluded from the averages.
    pub warmup: u64,
    pub seed: u64,
    pub initial_state: State,
}

impl SimConfig {
    /// Warmup of `horizon / 10`, starting at AoI 1 with an empty battery.
    pub fn new(horizon: u64, replications: usize, seed: u64) -> Self {
        Self {
            horizon,
            replications,
            warmup: horizon / 10,
            seed,
            initial_state: State::new(1, 0),
        }
    }

    fn validate(&self, params: &SystemParams) -> Result<()> {
        if self.horizon <= self.warmup {
            return Err(Error::InvalidParams(format!(
                "horizon ({}) must exceed warmup ({})",
                self.horizon, self.warmup
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParams("replications must be >= 1".into()));
        }
        let s = self.initial_state;
        if s.aoi < 1 || s.battery > params.battery_cap {
            return Err(Error::InvalidParams(format!("invalid initial state {s:?}")));
        }
        Ok(())
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::new(1_000_000, 20, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    MonteCarlo,
    ExactStationary,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::MonteCarlo => "mc",
            Method::ExactStationary => "exact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub avg_total_cost: f64,
    pub avg_aoi: f64,
    pub avg_weighted_energy: f64,
    /// Half-width of the 95% confidence interval on `avg_total_cost`; 0 for
    /// exact results, NaN for a single replication.
    pub ci_halfwidth_95: f64,
    pub method: Method,
}

impl EvalReport {
    fn new(avg_aoi: f64, avg_weighted_energy: f64, ci: f64, method: Method) -> Self {
        Self {
            avg_total_cost: avg_aoi + avg_weighted_energy,
            avg_aoi,
            avg_weighted_energy,
            ci_halfwidth_95: ci,
            method,
        }
    }

    /// Upper end of the confidence interval (the point value when exact).
    pub fn upper(&self) -> f64 {
        match self.method {
            Method::ExactStationary => self.avg_total_cost,
            Method::MonteCarlo => self.avg_total_cost + self.ci_halfwidth_95,
        }
    }
}

/// Monte Carlo estimate over independent replications. Replication `r`
/// uses stream `r` of `cfg.seed`, so the result does not depend on thread
/// scheduling. The AoI is not truncated.
pub fn simulate(spec: &PolicySpec, params: &SystemParams, cfg: &SimConfig) -> Result<EvalReport> {
    params.validate()?;
    spec.validate()?;
    cfg.validate(params)?;

    let per_rep: Vec<(f64, f64)> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(spec, params, cfg, r as u64))
        .collect();

    let reps = per_rep.len() as f64;
    let avg_aoi = per_rep.iter().map(|r| r.0).sum::<f64>() / reps;
    let avg_energy = per_rep.iter().map(|r| r.1).sum::<f64>() / reps;
    let ci = if per_rep.len() < 2 {
        f64::NAN
    } else {
        let mean = avg_aoi + avg_energy;
        let var = per_rep
            .iter()
            .map(|r| (r.0 + r.1 - mean).powi(2))
            .sum::<f64>()
            / (reps - 1.0);
        let t = StudentsT::new(0.0, 1.0, reps - 1.0)
            .expect("df >= 1")
            .inverse_cdf(0.975);
        t * (var / reps).sqrt()
    };
    Ok(EvalReport::new(avg_aoi, avg_energy, ci, Method::MonteCarlo))
}

fn run_replication(
    spec: &PolicySpec,
    params: &SystemParams,
    cfg: &SimConfig,
    rep: u64,
) -> (f64, f64) {
    let mut rng = random_stream(cfg.seed, rep);
    let mut s = cfg.initial_state;
    let mut aoi_sum = 0.0;
    let mut energy_sum = 0.0;
    for t in 0..cfg.horizon {
        let a = spec.decide(s, t, &mut rng);
        let out = sample_step_untruncated(s, a, params, &mut rng);
        if t >= cfg.warmup {
            aoi_sum += s.aoi as f64;
            energy_sum += params.omega * out.reliable_cost_paid;
        }
        s = out.next_state;
    }
    let n = (cfg.horizon - cfg.warmup) as f64;
    (aoi_sum / n, energy_sum / n)
}

/// Policy-induced chain on the truncated grid, augmented with a phase
/// counter for periodic policies. Augmented index order is phase-major, then
/// AoI, then battery, which makes a Gauss-Seidel sweep follow the direction
/// mass flows in.
struct InducedChain {
    params: SystemParams,
    phases: u32,
    offsets: Vec<usize>,
    succ: Vec<(usize, f64)>,
    aoi_cost: Vec<f64>,
    energy_cost: Vec<f64>,
}

impl InducedChain {
    fn build(spec: &PolicySpec, params: &SystemParams) -> Self {
        let phases = match spec {
            PolicySpec::Periodic { period, .. } => *period,
            _ => 1,
        };
        let n = phases as usize * params.num_states();
        let mut chain = Self {
            params: *params,
            phases,
            offsets: Vec::with_capacity(n + 1),
            succ: Vec::with_capacity(8 * n),
            aoi_cost: Vec::with_capacity(n),
            energy_cost: Vec::with_capacity(n),
        };
        chain.offsets.push(0);
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(8);
        for idx in 0..n {
            let (s, phase) = chain.decode(idx);
            let next_phase = (phase + 1) % phases;
            let mix: [(Action, f64); 2] = match spec {
                PolicySpec::Periodic { phase: on, .. } => {
                    let a = if phase == *on {
                        Action::Transmit
                    } else {
                        Action::Idle
                    };
                    [(a, 1.0), (Action::Idle, 0.0)]
                }
                PolicySpec::Randomized { p_tx } => {
                    [(Action::Transmit, *p_tx), (Action::Idle, 1.0 - p_tx)]
                }
                _ => [
                    (spec.stationary_action(s).expect("stationary policy"), 1.0),
                    (Action::Idle, 0.0),
                ],
            };
            row.clear();
            let mut energy = 0.0;
            for (a, w) in mix {
                if w == 0.0 {
                    continue;
                }
                energy += w * params.omega * reliable_cost(s, a, params);
                for &(t, p) in transition_unchecked(s, a, params).entries() {
                    let j = chain.encode(t, next_phase);
                    match row.iter_mut().find(|e| e.0 == j) {
                        Some(e) => e.1 += w * p,
                        None => row.push((j, w * p)),
                    }
                }
            }
            chain.succ.extend_from_slice(&row);
            chain.offsets.push(chain.succ.len());
            chain.aoi_cost.push(s.aoi as f64);
            chain.energy_cost.push(energy);
        }
        chain
    }

    fn len(&self) -> usize {
        self.aoi_cost.len()
    }

    #[inline]
    fn encode(&self, s: State, phase: u32) -> usize {
        let b = self.params.battery_cap as usize + 1;
        (phase as usize * self.params.aoi_cap as usize + (s.aoi as usize - 1)) * b
            + s.battery as usize
    }

    #[inline]
    fn decode(&self, idx: usize) -> (State, u32) {
        let b = self.params.battery_cap as usize + 1;
        let cap = self.params.aoi_cap as usize;
        let battery = (idx % b) as u32;
        let rest = idx / b;
        (
            State::new((rest % cap) as u32 + 1, battery),
            (rest / cap) as u32,
        )
    }

    fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.succ[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Strongly connected components with no outgoing edges, each sorted.
    fn closed_classes(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut g = DiGraph::<(), ()>::with_capacity(n, self.succ.len());
        for _ in 0..n {
            g.add_node(());
        }
        for i in 0..n {
            for &(j, p) in self.row(i) {
                if p > 0.0 && i != j {
                    g.add_edge(NodeIndex::new(i), NodeIndex::new(j), ());
                }
            }
        }
        let sccs = tarjan_scc(&g);
        let mut comp = vec![0usize; n];
        for (c, members) in sccs.iter().enumerate() {
            for v in members {
                comp[v.index()] = c;
            }
        }
        let mut classes: Vec<Vec<usize>> = sccs
            .iter()
            .enumerate()
            .filter(|(c, members)| {
                members.iter().all(|v| {
                    self.row(v.index())
                        .iter()
                        .all(|&(j, p)| p == 0.0 || comp[j] == *c)
                })
            })
            .map(|(_, members)| {
                let mut m: Vec<usize> = members.iter().map(|v| v.index()).collect();
                m.sort_unstable();
                m
            })
            .collect();
        classes.sort_by_key(|m| m[0]);
        classes
    }

    /// Stationary law restricted to a closed class, by Gauss-Seidel sweeps in
    /// index order.
    fn stationary_on(&self, class: &[usize]) -> Result<(Vec<f64>, f64)> {
        let n = self.len();
        let mut member = vec![false; n];
        for &i in class {
            member[i] = true;
        }
        // incoming edges within the class
        let mut in_off = vec![0usize; n + 1];
        for &i in class {
            for &(j, _) in self.row(i) {
                in_off[j + 1] += 1;
            }
        }
        for k in 0..n {
            in_off[k + 1] += in_off[k];
        }
        let mut fill = in_off.clone();
        let mut incoming = vec![(0usize, 0.0f64); in_off[n]];
        for &i in class {
            for &(j, p) in self.row(i) {
                incoming[fill[j]] = (i, p);
                fill[j] += 1;
            }
        }

        let mut pi = vec![0.0; n];
        let init = 1.0 / class.len() as f64;
        for &i in class {
            pi[i] = init;
        }
        let mut next = vec![0.0; n];
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_SWEEPS {
            for &j in class {
                let mut inflow = 0.0;
                let mut stay = 0.0;
                for &(i, p) in &incoming[in_off[j]..in_off[j + 1]] {
                    if i == j {
                        stay += p;
                    } else {
                        inflow += pi[i] * p;
                    }
                }
                pi[j] = if stay >= 1.0 {
                    pi[j]
                } else {
                    inflow / (1.0 - stay)
                };
            }
            let total: f64 = class.iter().map(|&i| pi[i]).sum();
            for &i in class {
                pi[i] /= total;
                next[i] = 0.0;
            }
            for &i in class {
                for &(j, p) in self.row(i) {
                    next[j] += pi[i] * p;
                }
            }
            residual = class.iter().map(|&i| (next[i] - pi[i]).abs()).sum();
            if residual < STATIONARY_RESIDUAL {
                debug_assert!(class.iter().all(|&i| member[i]));
                return Ok((pi, residual));
            }
        }
        Err(Error::StationaryNotConverged {
            sweeps: MAX_SWEEPS,
            residual,
            target: STATIONARY_RESIDUAL,
        })
    }
}

/// Stationary distribution of a policy-induced chain.
#[derive(Debug, Clone)]
pub struct Stationary {
    pub params: SystemParams,
    /// Phase counter size (the period for periodic policies, else 1).
    pub phases: u32,
    /// Probabilities in augmented index order (phase, AoI, battery).
    pub probs: Vec<f64>,
    /// Final L1 residual.
    pub residual: f64,
    pub avg_aoi: f64,
    pub avg_weighted_energy: f64,
    /// Probability of the `aoi = aoi_cap` row.
    pub boundary_mass: f64,
    /// Number of closed classes found (all with the same costs).
    pub closed_classes: usize,
}

impl Stationary {
    /// Marginal probability of `s`, summed over phases.
    pub fn mass_at(&self, s: State) -> f64 {
        let per_phase = self.params.num_states();
        let b = self.params.battery_cap as usize + 1;
        let local = (s.aoi as usize - 1) * b + s.battery as usize;
        (0..self.phases as usize)
            .map(|ph| self.probs[ph * per_phase + local])
            .sum()
    }
}

/// Stationary law of the truncated chain induced by `spec`.
///
/// When the chain has several closed classes their costs must coincide (the
/// average cost then does not depend on the initial state); otherwise
/// [`Error::Reducible`] lists one state of each class with its cost.
pub fn stationary(spec: &PolicySpec, params: &SystemParams) -> Result<Stationary> {
    params.validate()?;
    spec.validate()?;
    if let PolicySpec::Table(t) = spec {
        if t.aoi_cap() != params.aoi_cap || t.battery_cap() != params.battery_cap {
            return Err(Error::InvalidParams(
                "policy table grid does not match params".into(),
            ));
        }
    }
    let chain = InducedChain::build(spec, params);
    let classes = chain.closed_classes();

    let mut solved = Vec::with_capacity(classes.len());
    for class in &classes {
        let (pi, residual) = chain.stationary_on(class)?;
        let aoi: f64 = class.iter().map(|&i| pi[i] * chain.aoi_cost[i]).sum();
        let energy: f64 = class.iter().map(|&i| pi[i] * chain.energy_cost[i]).sum();
        solved.push((pi, residual, aoi, energy));
    }

    let (first_aoi, first_energy) = (solved[0].2, solved[0].3);
    let agree = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(1.0);
    if solved
        .iter()
        .any(|c| !agree(c.2, first_aoi) || !agree(c.3, first_energy))
    {
        return Err(Error::Reducible {
            classes: classes
                .iter()
                .zip(&solved)
                .map(|(cl, c)| (chain.decode(cl[0]).0, c.2 + c.3))
                .collect(),
        });
    }

    let mut boundary_mass: f64 = 0.0;
    for (class, c) in classes.iter().zip(&solved) {
        let m: f64 = class
            .iter()
            .filter(|&&i| chain.decode(i).0.aoi == params.aoi_cap)
            .map(|&i| c.0[i])
            .sum();
        boundary_mass = boundary_mass.max(m);
    }
    let n_classes = classes.len();
    let (probs, residual, avg_aoi, avg_energy) = solved.swap_remove(0);
    Ok(Stationary {
        params: *params,
        phases: chain.phases,
        probs,
        residual,
        avg_aoi,
        avg_weighted_energy: avg_energy,
        boundary_mass,
        closed_classes: n_classes,
    })
}

/// Exact average cost on the truncated chain, refusing results whose
/// stationary mass at the AoI cap exceeds [`BOUNDARY_MASS_LIMIT`].
pub fn evaluate_exact(spec: &PolicySpec, params: &SystemParams) -> Result<EvalReport> {
    let st = stationary(spec, params)?;
    if st.boundary_mass > BOUNDARY_MASS_LIMIT {
        return Err(Error::BoundaryMass {
            mass: st.boundary_mass,
            aoi_cap: params.aoi_cap,
            limit: BOUNDARY_MASS_LIMIT,
        });
    }
    Ok(report_from(&st))
}

/// Exact average cost of the truncated chain itself, with no boundary guard.
/// This is the quantity the solver's gain refers to.
pub fn evaluate_exact_truncated(spec: &PolicySpec, params: &SystemParams) -> Result<EvalReport> {
    stationary(spec, params).map(|st| report_from(&st))
}

fn report_from(st: &Stationary) -> EvalReport {
    EvalReport::new(
        st.avg_aoi,
        st.avg_weighted_energy,
        0.0,
        Method::ExactStationary,
    )
}

/// Brute-force optimum over all deterministic stationary policies of the
/// truncated grid (at most [`ENUMERATION_LIMIT`] states).
///
/// Ties within 1e-10 go to the table with fewer transmitting states, then to
/// the smaller bit mask. Policies whose closed classes disagree on cost have
/// no single average cost and are skipped.
pub fn enumerate_optimal(params: &SystemParams) -> Result<(PolicyTable, f64)> {
    params.validate()?;
    let n = params.num_states();
    if n > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            states: n,
            limit: ENUMERATION_LIMIT,
        });
    }
    let costs: Vec<Option<f64>> = (0..1u64 << n)
        .into_par_iter()
        .map(|mask| {
            let spec = PolicySpec::Table(PolicyTable::from_mask(params, mask));
            match evaluate_exact_truncated(&spec, params) {
                Ok(r) => Ok(Some(r.avg_total_cost)),
                Err(Error::Reducible { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(u64, f64)> = None;
    for (mask, cost) in costs.iter().enumerate() {
        let Some(cost) = *cost else { continue };
        let mask = mask as u64;
        best = match best {
            None => Some((mask, cost)),
            Some((bm, bc)) => {
                if cost < bc - 1e-10
                    || ((cost - bc).abs() <= 1e-10 && mask.count_ones() < bm.count_ones())
                {
                    Some((mask, cost))
                } else {
                    Some((bm, bc))
                }
            }
        };
    }
    let (mask, cost) = best.expect("some deterministic policy has a single average cost");
    Ok((PolicyTable::from_mask(params, mask), cost))
}
