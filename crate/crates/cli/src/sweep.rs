//! One-axis parameter sweeps comparing the solved threshold policy with the
//! baseline policies.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use aoi_energy::eval::{evaluate_exact, simulate};
use aoi_energy::solver::solve_thresholds;
use aoi_energy::structure::{check_all, DEFAULT_TOLERANCE};
use aoi_energy::{
    Error as CoreError, EvalReport, PolicySpec, SimConfig, SolverConfig, SystemParams,
};

use crate::error::{CliError, Result};

/// Erasure probability used to solve at a `p = 0` sweep point; the solver
/// needs `0 < p < 1`.
pub const CLAMPED_P: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Omega,
    Lambda,
    P,
}

impl Axis {
    pub fn apply(self, mut params: SystemParams, value: f64) -> SystemParams {
        match self {
            Axis::Omega => params.omega = value,
            Axis::Lambda => params.lambda_eh = value,
            Axis::P => params.p = value,
        }
        params
    }

    /// Default sweep grid for the axis.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            Axis::Omega => vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            Axis::Lambda => (1..=10).map(|i| i as f64 / 10.0).collect(),
            Axis::P => (0..=9).map(|i| i as f64 / 10.0).collect(),
        }
    }

    fn check_value(self, v: f64, allow_zero_omega: bool) -> Result<()> {
        let ok = v.is_finite()
            && match self {
                Axis::Omega => v > 0.0 || (v == 0.0 && allow_zero_omega),
                Axis::Lambda => (0.0..=1.0).contains(&v),
                Axis::P => (0.0..1.0).contains(&v),
            };
        if ok {
            Ok(())
        } else {
            Err(CliError::Usage(format!(
                "{v} is out of range for axis {self}"
            )))
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Omega => "omega",
            Axis::Lambda => "lambda",
            Axis::P => "p",
        })
    }
}

impl FromStr for Axis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega" => Ok(Axis::Omega),
            "lambda" => Ok(Axis::Lambda),
            "p" => Ok(Axis::P),
            _ => Err(CliError::Usage(format!(
                "unknown axis {s:?} (omega, lambda, p)"
            ))),
        }
    }
}

/// A sweep entry: the solver's own policy or a fixed baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyChoice {
    Solved,
    Fixed(PolicySpec),
}

impl PolicyChoice {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "solved" {
            Ok(PolicyChoice::Solved)
        } else {
            Ok(PolicyChoice::Fixed(PolicySpec::parse(s)?))
        }
    }

    /// `zero-wait, periodic:5, periodic:10, random:0.5, energy-first, solved`.
    pub fn defaults() -> Vec<Self> {
        vec![
            PolicyChoice::Fixed(PolicySpec::ZeroWait),
            PolicyChoice::Fixed(PolicySpec::periodic(5)),
            PolicyChoice::Fixed(PolicySpec::periodic(10)),
            PolicyChoice::Fixed(PolicySpec::randomized()),
            PolicyChoice::Fixed(PolicySpec::EnergyFirst),
            PolicyChoice::Solved,
        ]
    }
}

impl fmt::Display for PolicyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyChoice::Solved => f.write_str("solved"),
            PolicyChoice::Fixed(spec) => spec.fmt(f),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub fixed: SystemParams,
    pub policies: Vec<PolicyChoice>,
    pub sim: SimConfig,
    pub solver: SolverConfig,
}

impl SweepSpec {
    /// Sweep over `axis` with the default grid, the default policy set and
    /// `p = 0.2, lambda = 0.5, omega = 10, c_r = 2, B = 20, aoi_cap = 400`
    /// for the fixed parameters.
    pub fn new(axis: Axis, sim: SimConfig) -> Self {
        Self {
            axis,
            values: axis.default_values(),
            fixed: SystemParams::default().with_aoi_cap(400),
            policies: PolicyChoice::defaults(),
            sim,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(CliError::Usage(
                "sweep needs at least one axis value".into(),
            ));
        }
        if self.policies.is_empty() {
            return Err(CliError::Usage("sweep needs at least one policy".into()));
        }
        for &v in &self.values {
            self.axis.check_value(v, self.solver.allow_zero_omega)?;
            self.axis.apply(self.fixed, v).validate()?;
        }
        Ok(())
    }
}

/// One output line. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub policy: String,
    pub p: f64,
    pub lambda: f64,
    pub omega: f64,
    pub c_r: f64,
    #[serde(rename = "B")]
    pub battery_cap: u32,
    pub method: String,
    pub avg_total: f64,
    pub avg_aoi: f64,
    pub avg_energy: f64,
    pub ci95: f64,
    pub seed: u64,
}

impl ResultRow {
    pub fn new(policy: String, params: &SystemParams, report: &EvalReport, seed: u64) -> Self {
        Self {
            policy,
            p: params.p,
            lambda: params.lambda_eh,
            omega: params.omega,
            c_r: params.c_r,
            battery_cap: params.battery_cap,
            method: report.method.as_str().to_string(),
            avg_total: report.avg_total_cost,
            avg_aoi: report.avg_aoi,
            avg_energy: report.avg_weighted_energy,
            ci95: report.ci_halfwidth_95,
            seed,
        }
    }
}

/// Exact evaluation when the truncated chain supports it, Monte Carlo when
/// the boundary mass or the stationary iteration rules it out.
pub fn evaluate_preferring_exact(
    spec: &PolicySpec,
    params: &SystemParams,
    sim: &SimConfig,
) -> aoi_energy::Result<EvalReport> {
    match evaluate_exact(spec, params) {
        Ok(r) => Ok(r),
        Err(CoreError::BoundaryMass { .. } | CoreError::StationaryNotConverged { .. }) => {
            simulate(spec, params, sim)
        }
        Err(e) => Err(e),
    }
}

fn point_label(axis: Axis, value: f64) -> String {
    format!("{axis}={value}")
}

fn run_point(spec: &SweepSpec, value: f64) -> Result<Vec<ResultRow>> {
    let params = spec.axis.apply(spec.fixed, value);
    let label = point_label(spec.axis, value);
    let wants_solved = spec.policies.contains(&PolicyChoice::Solved);

    let solved = if wants_solved {
        let clamped = params.p == 0.0;
        let solve_params = if clamped {
            SystemParams {
                p: CLAMPED_P,
                ..params
            }
        } else {
            params
        };
        let sol =
            solve_thresholds(&solve_params, &spec.solver).map_err(|e| CliError::at(&label, e))?;
        let report = check_all(&sol.values, &sol.q_table, DEFAULT_TOLERANCE);
        if !report.all_passed() {
            return Err(CliError::at(
                &label,
                CliError::Structure(format!(
                    "worst margin {:e} at {:?}",
                    report.worst_violation, report.witness
                )),
            ));
        }
        Some((sol.thresholds, clamped))
    } else {
        None
    };

    let mut rows = Vec::with_capacity(spec.policies.len());
    for choice in &spec.policies {
        let (name, policy) = match choice {
            PolicyChoice::Solved => {
                let (tp, clamped) = solved.as_ref().expect("solved above");
                let name = if *clamped {
                    format!("solved[p={CLAMPED_P:e}]")
                } else {
                    "solved".to_string()
                };
                (name, PolicySpec::Threshold(tp.clone()))
            }
            PolicyChoice::Fixed(p) => (p.to_string(), p.clone()),
        };
        let report = evaluate_preferring_exact(&policy, &params, &spec.sim)
            .map_err(|e| CliError::at(format!("{label}, policy {name}"), e))?;
        rows.push(ResultRow::new(name, &params, &report, spec.sim.seed));
    }
    Ok(rows)
}

/// Runs every grid point (in parallel) and returns rows in axis order, then
/// policy order. The output depends only on `spec`.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let per_point: Vec<Vec<ResultRow>> = spec
        .values
        .par_iter()
        .map(|&v| run_point(spec, v))
        .collect::<Result<_>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

/// CSV with a header row.
pub fn write_rows<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wtr.write_record([
            "policy",
            "p",
            "lambda",
            "omega",
            "c_r",
            "B",
            "method",
            "avg_total",
            "avg_aoi",
            "avg_energy",
            "ci95",
            "seed",
        ])?;
    }
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| CliError::Csv(e.into()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing_and_ranges() {
        assert_eq!("omega".parse::<Axis>().unwrap(), Axis::Omega);
        assert_eq!("p".parse::<Axis>().unwrap(), Axis::P);
        assert!("mu".parse::<Axis>().is_err());
        assert!(Axis::P.check_value(1.0, false).is_err());
        assert!(Axis::P.check_value(0.0, false).is_ok());
        assert!(Axis::Omega.check_value(0.0, false).is_err());
        assert!(Axis::Omega.check_value(0.0, true).is_ok());
        assert!(Axis::Lambda.check_value(1.0, false).is_ok());
    }

    #[test]
    fn default_grids() {
        assert_eq!(Axis::P.default_values().first(), Some(&0.0));
        assert_eq!(Axis::P.default_values().last(), Some(&0.9));
        assert_eq!(Axis::Lambda.default_values().last(), Some(&1.0));
    }

    #[test]
    fn policy_choices() {
        assert_eq!(PolicyChoice::parse("solved").unwrap(), PolicyChoice::Solved);
        assert_eq!(
            PolicyChoice::parse("periodic:5").unwrap(),
            PolicyChoice::Fixed(PolicySpec::periodic(5))
        );
        let names: Vec<String> = PolicyChoice::defaults()
            .iter()
            .map(|c| c.to_string())
            .collect();
        assert_eq!(
            names,
            [
                "zero-wait",
                "periodic:5",
                "periodic:10",
                "random:0.5",
                "energy-first",
                "solved"
            ]
        );
    }

    #[test]
    fn header_matches_columns() {
        let mut buf = Vec::new();
        write_rows(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "policy,p,lambda,omega,c_r,B,method,avg_total,avg_aoi,avg_energy,ci95,seed\n"
        );
    }

    #[test]
    fn empty_sweep_rejected() {
        let mut spec = SweepSpec::new(Axis::Omega, SimConfig::new(1000, 2, 0));
        spec.values.clear();
        assert!(matches!(run_sweep(&spec), Err(CliError::Usage(_))));
    }

    #[test]
    fn p_zero_point_is_flagged() {
        let mut spec = SweepSpec::new(Axis::P, SimConfig::new(1000, 2, 0));
        spec.values = vec![0.0];
        spec.fixed.battery_cap = 3;
        spec.fixed.aoi_cap = 60;
        spec.policies = vec![
            PolicyChoice::Solved,
            PolicyChoice::Fixed(PolicySpec::ZeroWait),
        ];
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows[0].policy, "solved[p=1e-9]");
        assert_eq!(rows[0].p, 0.0);
        assert_eq!(rows[0].method, "exact");
        assert!(rows[0].avg_total <= rows[1].avg_total + 1e-9);
    }
}
