//! Single-point solve and check: the files written by `solve` and re-read by
//! `check`.

use std::fs;
use std::path::{Path, PathBuf};

use aoi_energy::solver::{
    check_truncation_adequacy, extract_thresholds, greedy_policy, solve_thresholds,
};
use aoi_energy::structure::check_all;
use aoi_energy::{
    QTable, SolverConfig, StructureReport, SystemParams, ThresholdPolicy, ValueTable,
};

use crate::error::{CliError, Result};

pub const VALUES_CSV: &str = "values.csv";
pub const THRESHOLDS_CSV: &str = "thresholds.csv";
pub const THRESHOLDS_JSON: &str = "thresholds.json";
pub const REPORT_JSON: &str = "structure.json";

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_params(path: &Path) -> Result<SystemParams> {
    let params: SystemParams = serde_json::from_str(&read_file(path)?)?;
    params.validate()?;
    Ok(params)
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub gain: f64,
    pub iterations: usize,
    pub thresholds: ThresholdPolicy,
    pub report: StructureReport,
    /// `None` when the adequacy re-solve was skipped.
    pub adequate: Option<bool>,
    pub files: Vec<PathBuf>,
}

/// Solves one parameter point and writes values, thresholds and the
/// structure report into `out_dir`. Artifacts are written before any
/// structural or truncation failure is returned, so they can be inspected.
pub fn run_solve(
    params: &SystemParams,
    cfg: &SolverConfig,
    tol: f64,
    out_dir: &Path,
    check_adequacy: bool,
) -> Result<SolveOutcome> {
    let sol = solve_thresholds(params, cfg)?;
    let report = check_all(&sol.values, &sol.q_table, tol);

    fs::create_dir_all(out_dir).map_err(|source| CliError::File {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut values = Vec::new();
    sol.values.write_csv(&mut values)?;
    let mut th_csv = Vec::new();
    sol.thresholds.write_csv(&mut th_csv)?;
    let files = vec![
        out_dir.join(VALUES_CSV),
        out_dir.join(THRESHOLDS_CSV),
        out_dir.join(THRESHOLDS_JSON),
        out_dir.join(REPORT_JSON),
    ];
    write_file(&files[0], values)?;
    write_file(&files[1], th_csv)?;
    write_file(&files[2], sol.thresholds.to_json()?)?;
    write_file(&files[3], report.to_json())?;

    if !report.all_passed() {
        return Err(CliError::Structure(format!(
            "worst margin {:e} at {:?}",
            report.worst_violation, report.witness
        )));
    }
    let adequate = if check_adequacy {
        let ok = check_truncation_adequacy(&sol.thresholds, params, cfg)?;
        if !ok {
            return Err(CliError::Truncation(format!(
                "thresholds change when aoi_cap is doubled from {}",
                params.aoi_cap
            )));
        }
        Some(ok)
    } else {
        None
    };
    Ok(SolveOutcome {
        gain: sol.values.gain,
        iterations: sol.values.iterations,
        thresholds: sol.thresholds,
        report,
        adequate,
        files,
    })
}

/// Reloads a value table (and optionally a threshold file), reruns the
/// structure certificates and checks that the thresholds match the greedy
/// policy of the reloaded values.
pub fn run_check(
    params: &SystemParams,
    values_csv: &Path,
    thresholds_json: Option<&Path>,
    tol: f64,
) -> Result<StructureReport> {
    let text = read_file(values_csv)?;
    let values = ValueTable::read_csv(*params, text.as_bytes())?;
    let q = QTable::from_values(&values);
    let report = check_all(&values, &q, tol);
    if let Some(path) = thresholds_json {
        let saved = ThresholdPolicy::from_json(&read_file(path)?)?;
        let derived = extract_thresholds(&greedy_policy(&q))?;
        if saved != derived {
            return Err(CliError::Structure(format!(
                "{} does not match the greedy policy of {}",
                path.display(),
                values_csv.display()
            )));
        }
    }
    Ok(report)
}
