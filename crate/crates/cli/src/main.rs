use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use aoi_energy::eval::{evaluate_exact, simulate};
use aoi_energy::solver::solve_thresholds;
use aoi_energy::structure::DEFAULT_TOLERANCE;
use aoi_energy::{PolicySpec, SimConfig, SolverConfig, SystemParams};
use aoi_energy_cli::artifacts::{load_params, run_check, run_solve};
use aoi_energy_cli::error::{CliError, Result, EXIT_OK, EXIT_STRUCTURE};
use aoi_energy_cli::sweep::{
    evaluate_preferring_exact, write_rows, Axis, PolicyChoice, ResultRow, SweepSpec,
};

#[derive(Parser)]
#[command(
    name = "aoi-energy",
    version,
    about = "Optimal AoI updating with harvested and reliable backup energy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one parameter point; write values, thresholds and structure report.
    Solve(SolveArgs),
    /// Re-run the structure certificates on saved artifacts.
    Check(CheckArgs),
    /// Evaluate policies at one parameter point.
    Eval(EvalArgs),
    /// Sweep one parameter and compare the solved policy with baselines.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SolverFlags {
    /// Span tolerance of relative value iteration.
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iters: usize,
    /// Override the params file's aoi_cap.
    #[arg(long)]
    aoi_cap: Option<u32>,
    /// Accept omega = 0.
    #[arg(long)]
    test_mode: bool,
}

impl SolverFlags {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            allow_zero_omega: self.test_mode,
            ..SolverConfig::default()
        }
    }

    fn params(&self, params: SystemParams) -> SystemParams {
        match self.aoi_cap {
            Some(cap) => params.with_aoi_cap(cap),
            None => params,
        }
    }
}

#[derive(Args)]
struct SimFlags {
    #[arg(long, default_value_t = 1_000_000)]
    horizon: u64,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SimFlags {
    fn config(&self) -> SimConfig {
        SimConfig::new(self.horizon, self.reps, self.seed)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    params: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Skip the doubled-aoi_cap re-solve.
    #[arg(long)]
    skip_adequacy: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    params: PathBuf,
    /// values.csv written by `solve`.
    #[arg(long)]
    values: PathBuf,
    /// thresholds.json written by `solve`.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMethod {
    /// Exact when possible, Monte Carlo otherwise.
    Auto,
    Exact,
    Mc,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    params: PathBuf,
    /// Comma-separated: zero-wait, periodic:N[:PHASE], random[:P], energy-first,
    /// threshold:<file.json>, solved.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "zero-wait,periodic:5,periodic:10,random:0.5,energy-first,solved"
    )]
    policies: Vec<String>,
    #[arg(long, value_enum, default_value_t = EvalMethod::Auto)]
    method: EvalMethod,
    #[command(flatten)]
    sim: SimFlags,
    #[command(flatten)]
    solver: SolverFlags,
    /// Results CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Fixed parameters; defaults to p=0.2, lambda=0.5, omega=10, c_r=2, B=20, aoi_cap=400.
    #[arg(long)]
    params: Option<PathBuf>,
    /// omega, lambda or p.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values; a default grid per axis when absent.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "zero-wait,periodic:5,periodic:10,random:0.5,energy-first,solved"
    )]
    policies: Vec<String>,
    #[command(flatten)]
    sim: SimFlags,
    #[command(flatten)]
    solver: SolverFlags,
    /// Results CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit_rows(rows: &[ResultRow], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            let f = std::fs::File::create(path).map_err(|source| CliError::File {
                path: path.display().to_string(),
                source,
            })?;
            write_rows(rows, f)
        }
        None => write_rows(rows, std::io::stdout().lock()),
    }
}

fn solve_cmd(args: SolveArgs) -> Result<i32> {
    let params = args.solver.params(load_params(&args.params)?);
    let out = run_solve(
        &params,
        &args.solver.config(),
        DEFAULT_TOLERANCE,
        &args.out,
        !args.skip_adequacy,
    )?;
    println!("gain {} after {} iterations", out.gain, out.iterations);
    for (q, t) in out.thresholds.thresholds.iter().enumerate() {
        println!("q={q:<3} threshold {t}");
    }
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(EXIT_OK)
}

fn check_cmd(args: CheckArgs) -> Result<i32> {
    let params = load_params(&args.params)?;
    let report = run_check(&params, &args.values, args.thresholds.as_deref(), args.tol)?;
    println!("{}", report.to_json());
    Ok(if report.all_passed() {
        EXIT_OK
    } else {
        EXIT_STRUCTURE
    })
}

fn eval_cmd(args: EvalArgs) -> Result<i32> {
    let params = args.solver.params(load_params(&args.params)?);
    let sim = args.sim.config();
    let mut rows = Vec::new();
    for text in &args.policies {
        let (name, spec) = match PolicyChoice::parse(text)? {
            PolicyChoice::Solved => {
                let sol = solve_thresholds(&params, &args.solver.config())?;
                ("solved".to_string(), PolicySpec::Threshold(sol.thresholds))
            }
            PolicyChoice::Fixed(spec) => (text.clone(), spec),
        };
        let report = match args.method {
            EvalMethod::Auto => evaluate_preferring_exact(&spec, &params, &sim)?,
            EvalMethod::Exact => evaluate_exact(&spec, &params)?,
            EvalMethod::Mc => simulate(&spec, &params, &sim)?,
        };
        rows.push(ResultRow::new(name, &params, &report, sim.seed));
    }
    emit_rows(&rows, args.out.as_ref())?;
    Ok(EXIT_OK)
}

fn sweep_cmd(args: SweepArgs) -> Result<i32> {
    let axis: Axis = args.axis.parse()?;
    let mut spec = SweepSpec::new(axis, args.sim.config());
    if let Some(path) = &args.params {
        spec.fixed = load_params(path)?;
    }
    spec.fixed = args.solver.params(spec.fixed);
    if let Some(values) = args.values {
        spec.values = values;
    }
    spec.policies = args
        .policies
        .iter()
        .map(|s| PolicyChoice::parse(s))
        .collect::<Result<_>>()?;
    spec.solver = args.solver.config();
    let rows = aoi_energy_cli::run_sweep(&spec)?;
    emit_rows(&rows, args.out.as_ref())?;
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve_cmd(a),
        Command::Check(a) => check_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
