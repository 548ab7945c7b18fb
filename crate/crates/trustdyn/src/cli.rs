//! Command-line front end.
//!
//! Subcommands map onto the library: `equilibria` and `flow` report the
//! closed-form structure, `simulate` integrates the perception system,
//! `lambda-star` / `halfway-q` run the bisection experiments, and the two
//! `sweep-*` commands emit the data series behind the headline figures.
//!
//! Options may also come from a JSON config file (`--config`); explicit
//! flags always win. Machine-readable records go to `--out` (CSV by
//! default, JSON behind `--format json`) or to stdout when no path is
//! given.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    flow_direction, integrate, IntegratorConfig, LimitLabel, PopulationState, Preset, Trajectory,
};
use crate::equilibria::{equilibrium_set, interior_roots, EquilibriumSet, Regime};
use crate::error::Error;
use crate::experiments::{
    halfway_q, lambda_star, sweep_lambda_star, sweep_total_cheating, LambdaStarResult, QMode,
    SweepStatus, DEFAULT_LAMBDA_TOL,
};
use crate::fmt as numfmt;
use crate::model::ModelParams;

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 2;
const EXIT_RUNTIME: i32 = 3;

/// Entry point; returns the process exit status (0 success, 2 argument
/// validation failure, 3 runtime failure).
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        match err {
            Error::Domain { .. } | Error::Regime { .. } => CliError::Usage(err.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(err: io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "trustdyn",
    version,
    about = "Trust-game economy: equilibria, belief dynamics, invasion experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify the equilibrium regime and report every rest point.
    Equilibria {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Report the direction of the common-perception flow between rest points.
    Flow {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Integrate the insider/outsider perception system from an initial state.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        dynamics: DynamicsArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Bisect for the minimum invasion size that disrupts the good equilibrium.
    LambdaStar {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        dynamics: DynamicsArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Find the scoundrel fraction placing the unstable equilibrium halfway
    /// between the stable ones.
    HalfwayQ {
        #[command(flatten)]
        model: ModelArgs,
        /// Residual tolerance for the bisection (default 1e-12).
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sweep total cheating in the bad equilibrium across a q grid.
    SweepCheating {
        #[command(flatten)]
        model: ModelArgs,
        /// Grid of scoundrel fractions, as lo:hi:n.
        #[arg(long = "q-grid")]
        q_grid: Option<GridSpec>,
        /// Worker bound (accepted for symmetry; this sweep is closed-form).
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sweep the minimum disrupting invasion size across a theta grid.
    SweepLambdaStar {
        #[command(flatten)]
        model: ModelArgs,
        /// Grid of theta values, as lo:hi:n.
        #[arg(long = "theta-grid")]
        theta_grid: Option<GridSpec>,
        /// How q is chosen per theta: fixed (--q) or halfway.
        #[arg(long = "q-mode", value_enum)]
        q_mode: Option<QModeArg>,
        /// Worker bound for independent records (env TRUSTDYN_JOBS as fallback).
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        dynamics: DynamicsArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Args, Default)]
struct ModelArgs {
    /// Social-cost weight theta (> 0).
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    /// Scoundrel fraction q, strictly between 0 and 1.
    #[arg(long, allow_negative_numbers = true)]
    q: Option<f64>,
    /// Belief-adjustment speed delta (default 1).
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// JSON config file; flags given here override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
struct DynamicsArgs {
    /// Outsider fraction lambda in [0, 1].
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Initial insider perception s1(0).
    #[arg(long = "s1-0", allow_negative_numbers = true)]
    s1_0: Option<f64>,
    /// Initial outsider perception s0(0).
    #[arg(long = "s0-0", allow_negative_numbers = true)]
    s0_0: Option<f64>,
    /// Named initial condition: invasion (s1=0, s0=s_b) or counter-invasion.
    #[arg(long)]
    preset: Option<Preset>,
    /// Integrator step size (default min(1e-2, 1e-1/delta)).
    #[arg(long, allow_negative_numbers = true)]
    step: Option<f64>,
    /// Integration horizon (default 1e3/delta).
    #[arg(long = "t-max", allow_negative_numbers = true)]
    t_max: Option<f64>,
    /// Tolerance: convergence residual for simulate (default 1e-10),
    /// bisection width for lambda-star (default 1e-12).
    #[arg(long)]
    tol: Option<f64>,
    /// Record every Nth integration step (default 10).
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Debug, Args, Default)]
struct OutputArgs {
    /// Output file for machine-readable records (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Machine output format (default csv).
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

/// Machine output encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QModeArg {
    Fixed,
    Halfway,
}

/// Linear grid specification `lo:hi:n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let span = self.hi - self.lo;
        (0..self.n)
            .map(|i| self.lo + span * i as f64 / (self.n - 1) as f64)
            .collect()
    }
}

impl std::str::FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid `{s}` must have the form lo:hi:n"));
        }
        let lo: f64 = parts[0]
            .parse()
            .map_err(|_| format!("grid lower bound `{}` is not a number", parts[0]))?;
        let hi: f64 = parts[1]
            .parse()
            .map_err(|_| format!("grid upper bound `{}` is not a number", parts[1]))?;
        let n: usize = parts[2]
            .parse()
            .map_err(|_| format!("grid point count `{}` is not a positive integer", parts[2]))?;
        if !lo.is_finite() || !hi.is_finite() {
            return Err(format!("grid `{s}` bounds must be finite"));
        }
        if n == 0 {
            return Err(format!("grid `{s}` needs at least one point"));
        }
        if hi < lo {
            return Err(format!("grid `{s}` upper bound is below the lower bound"));
        }
        Ok(GridSpec { lo, hi, n })
    }
}

/// Raw JSON config file contents. Field names mirror the long flags; unknown
/// keys are rejected.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub theta: Option<f64>,
    pub q: Option<f64>,
    pub delta: Option<f64>,
    pub lambda: Option<f64>,
    pub s1_0: Option<f64>,
    pub s0_0: Option<f64>,
    pub preset: Option<String>,
    pub step: Option<f64>,
    pub t_max: Option<f64>,
    pub tol: Option<f64>,
    pub theta_grid: Option<String>,
    pub q_grid: Option<String>,
    pub q_mode: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub stride: Option<usize>,
    pub jobs: Option<usize>,
}

/// Loads and strictly validates a JSON config file. Parse failures carry
/// the line/column; unknown keys are named.
pub fn load_config(path: &Path) -> Result<FileConfig, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
}

/// Fully merged run configuration: flag values override file values, and
/// remaining holes are filled with the documented defaults at dispatch.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub theta: Option<f64>,
    pub q: Option<f64>,
    pub delta: f64,
    pub lambda: Option<f64>,
    pub s1_0: Option<f64>,
    pub s0_0: Option<f64>,
    pub preset: Option<Preset>,
    pub step: Option<f64>,
    pub t_max: Option<f64>,
    pub tol: Option<f64>,
    pub stride: Option<usize>,
    pub theta_grid: Option<GridSpec>,
    pub q_grid: Option<GridSpec>,
    pub q_mode: Option<QMode>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub jobs: Option<usize>,
}

impl RunConfig {
    /// Integrator configuration with unset fields at their defaults for the
    /// resolved `delta` (step `min(1e-2, 1e-1/delta)`, horizon `1e3/delta`,
    /// tolerance `1e-10`).
    fn integrator(&self) -> IntegratorConfig {
        let mut config = IntegratorConfig::for_delta(self.delta);
        if let Some(step) = self.step {
            config.step = step;
        }
        if let Some(t_max) = self.t_max {
            config.t_max = t_max;
        }
        if let Some(tol) = self.tol {
            config.tol = tol;
        }
        if let Some(stride) = self.stride {
            config.stride = stride;
        }
        config
    }

    fn require_params(&self) -> Result<ModelParams, CliError> {
        let theta = self
            .theta
            .ok_or_else(|| usage("missing required parameter theta (--theta or config file)"))?;
        let q = self
            .q
            .ok_or_else(|| usage("missing required parameter q (--q or config file)"))?;
        ModelParams::with_delta(theta, q, self.delta).map_err(CliError::from)
    }

    fn require_theta(&self) -> Result<f64, CliError> {
        self.theta
            .ok_or_else(|| usage("missing required parameter theta (--theta or config file)"))
    }
}

#[allow(clippy::too_many_arguments)]
fn merge_config(
    model: &ModelArgs,
    dynamics: Option<&DynamicsArgs>,
    output: &OutputArgs,
    extra_tol: Option<f64>,
    theta_grid: Option<GridSpec>,
    q_grid: Option<GridSpec>,
    q_mode: Option<QModeArg>,
    jobs: Option<usize>,
) -> Result<RunConfig, CliError> {
    let file = match &model.config {
        Some(path) => load_config(path).map_err(usage)?,
        None => FileConfig::default(),
    };
    let dyn_default = DynamicsArgs::default();
    let dynamics = dynamics.unwrap_or(&dyn_default);

    let preset = match (&dynamics.preset, &file.preset) {
        (Some(p), _) => Some(*p),
        (None, Some(text)) => Some(text.parse::<Preset>().map_err(usage)?),
        (None, None) => None,
    };
    let format = match (output.format, &file.format) {
        (Some(f), _) => f,
        (None, Some(text)) => match text.as_str() {
            "csv" => OutputFormat::Csv,
            "json" => OutputFormat::Json,
            other => return Err(usage(format!("format `{other}` must be csv or json"))),
        },
        (None, None) => OutputFormat::Csv,
    };
    let parse_grid = |flag: Option<GridSpec>,
                      text: &Option<String>,
                      name: &str|
     -> Result<Option<GridSpec>, CliError> {
        match (flag, text) {
            (Some(g), _) => Ok(Some(g)),
            (None, Some(t)) => t
                .parse::<GridSpec>()
                .map(Some)
                .map_err(|e| usage(format!("{name}: {e}"))),
            (None, None) => Ok(None),
        }
    };
    let q_mode = match (q_mode, &file.q_mode) {
        (Some(QModeArg::Halfway), _) => Some(QMode::Halfway),
        (Some(QModeArg::Fixed), _) => None, // resolved against q below
        (None, Some(text)) => match text.as_str() {
            "halfway" => Some(QMode::Halfway),
            "fixed" => None,
            other => return Err(usage(format!("q-mode `{other}` must be fixed or halfway"))),
        },
        (None, None) => None,
    };

    Ok(RunConfig {
        theta: model.theta.or(file.theta),
        q: model.q.or(file.q),
        delta: model.delta.or(file.delta).unwrap_or(1.0),
        lambda: dynamics.lambda.or(file.lambda),
        s1_0: dynamics.s1_0.or(file.s1_0),
        s0_0: dynamics.s0_0.or(file.s0_0),
        preset,
        step: dynamics.step.or(file.step),
        t_max: dynamics.t_max.or(file.t_max),
        tol: dynamics.tol.or(extra_tol).or(file.tol),
        stride: dynamics.stride.or(file.stride),
        theta_grid: parse_grid(theta_grid, &file.theta_grid, "theta-grid")?,
        q_grid: parse_grid(q_grid, &file.q_grid, "q-grid")?,
        q_mode,
        out: output.out.clone().or(file.out),
        format,
        jobs: jobs.or(file.jobs),
    })
}

fn resolve_jobs(config: &RunConfig) -> Result<usize, CliError> {
    let jobs = match config.jobs {
        Some(j) => j,
        None => match std::env::var("TRUSTDYN_JOBS") {
            Ok(text) => text.parse::<usize>().map_err(|_| {
                usage(format!("TRUSTDYN_JOBS = `{text}` must be a positive integer"))
            })?,
            Err(_) => 1,
        },
    };
    if jobs == 0 {
        return Err(usage("jobs must be at least 1"));
    }
    Ok(jobs)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Equilibria { model, output } => {
            let config = merge_config(&model, None, &output, None, None, None, None, None)?;
            cmd_equilibria(&config)
        }
        Command::Flow { model, output } => {
            let config = merge_config(&model, None, &output, None, None, None, None, None)?;
            cmd_flow(&config)
        }
        Command::Simulate {
            model,
            dynamics,
            output,
        } => {
            let config =
                merge_config(&model, Some(&dynamics), &output, None, None, None, None, None)?;
            cmd_simulate(&config)
        }
        Command::LambdaStar {
            model,
            dynamics,
            output,
        } => {
            let config =
                merge_config(&model, Some(&dynamics), &output, None, None, None, None, None)?;
            cmd_lambda_star(&config)
        }
        Command::HalfwayQ { model, tol, output } => {
            let config = merge_config(&model, None, &output, tol, None, None, None, None)?;
            cmd_halfway_q(&config)
        }
        Command::SweepCheating {
            model,
            q_grid,
            jobs,
            output,
        } => {
            let config =
                merge_config(&model, None, &output, None, None, q_grid, None, jobs)?;
            cmd_sweep_cheating(&config)
        }
        Command::SweepLambdaStar {
            model,
            theta_grid,
            q_mode,
            jobs,
            dynamics,
            output,
        } => {
            let config = merge_config(
                &model,
                Some(&dynamics),
                &output,
                None,
                theta_grid,
                None,
                q_mode,
                jobs,
            )?;
            cmd_sweep_lambda_star(&config)
        }
    }
}

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

/// Writes machine output to the configured sink; returns true when a file
/// was written (human summaries then belong on stdout, otherwise stderr).
fn write_machine(config: &RunConfig, bytes: &[u8]) -> Result<bool, CliError> {
    match &config.out {
        Some(path) => {
            fs::write(path, bytes)?;
            Ok(true)
        }
        None => {
            io::stdout().write_all(bytes)?;
            Ok(false)
        }
    }
}

fn json_bytes<T: Serialize>(records: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec(records).map_err(|e| CliError::Runtime(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn theta_boundary_warning(theta: f64) {
    if (theta - 1.0).abs() <= 1e-12 {
        eprintln!(
            "warning: theta = 1 sits between the unique-equilibrium and \
             multiple-equilibria branches; classification follows the q_hat(1) = 1/3 rule"
        );
    }
}

// ---------------------------------------------------------------------------
// equilibria
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct EquilibriumRecord {
    regime: Regime,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_hat: Option<f64>,
    s_star: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_interior: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offer_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offer_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offer_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offer_interior: Option<f64>,
}

fn equilibrium_record(set: &EquilibriumSet, params: &ModelParams) -> EquilibriumRecord {
    let offer = |s: Option<f64>| s.map(|v| params.optimal_offer(v).expect("root in range"));
    EquilibriumRecord {
        regime: set.regime,
        q_hat: set.q_hat,
        s_star: set.s_star,
        s_g: set.s_g,
        s_u: set.s_u,
        s_b: set.s_b,
        s_interior: set.s_interior,
        offer_g: offer(set.s_g),
        offer_u: offer(set.s_u),
        offer_b: offer(set.s_b),
        offer_interior: offer(set.s_interior),
    }
}

fn equilibrium_csv(record: &EquilibriumRecord) -> Vec<u8> {
    let mut text = String::from(
        "regime,q_hat,s_star,s_g,s_u,s_b,s_interior,offer_g,offer_u,offer_b,offer_interior\n",
    );
    text.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{},{}\n",
        record.regime,
        numfmt::machine_opt(record.q_hat),
        numfmt::machine(record.s_star),
        numfmt::machine_opt(record.s_g),
        numfmt::machine_opt(record.s_u),
        numfmt::machine_opt(record.s_b),
        numfmt::machine_opt(record.s_interior),
        numfmt::machine_opt(record.offer_g),
        numfmt::machine_opt(record.offer_u),
        numfmt::machine_opt(record.offer_b),
        numfmt::machine_opt(record.offer_interior),
    ));
    text.into_bytes()
}

fn cmd_equilibria(config: &RunConfig) -> Result<(), CliError> {
    let params = config.require_params()?;
    theta_boundary_warning(params.theta());
    let set = equilibrium_set(&params);
    let record = equilibrium_record(&set, &params);

    println!("regime: {}", set.regime);
    if let Some(q_hat) = set.q_hat {
        println!("q_hat: {}", numfmt::human(q_hat));
    }
    println!("s_star: {}", numfmt::human(set.s_star));
    let show = |name: &str, root: Option<f64>, offer: Option<f64>| {
        if let (Some(root), Some(offer)) = (root, offer) {
            println!(
                "{name}: {}  offer: {}",
                numfmt::human(root),
                numfmt::human(offer)
            );
        }
    };
    show("s_g", record.s_g, record.offer_g);
    show("s_u", record.s_u, record.offer_u);
    show("s_b", record.s_b, record.offer_b);
    show("s_interior", record.s_interior, record.offer_interior);

    if config.out.is_some() {
        let bytes = match config.format {
            OutputFormat::Csv => equilibrium_csv(&record),
            OutputFormat::Json => json_bytes(&vec![&record])?,
        };
        write_machine(config, &bytes)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// flow
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct FlowRecord {
    s_lo: f64,
    s_hi: f64,
    direction: &'static str,
}

fn cmd_flow(config: &RunConfig) -> Result<(), CliError> {
    let params = config.require_params()?;
    theta_boundary_warning(params.theta());
    let set = equilibrium_set(&params);
    let (s_u, s_b) = match set.regime {
        Regime::Tripartite | Regime::Boundary => (set.s_u.unwrap(), set.s_b.unwrap()),
        other => {
            return Err(CliError::from(Error::Regime {
                required: "tripartite",
                found: other,
            }))
        }
    };

    let mut intervals = vec![(0.0, s_u)];
    if s_b > s_u {
        intervals.push((s_u, s_b));
    }
    intervals.push((s_b, 1.0));

    let mut records = Vec::new();
    for (lo, hi) in intervals {
        let direction = match flow_direction(0.5 * (lo + hi), &params).map_err(CliError::from)? {
            std::cmp::Ordering::Less => "falling",
            std::cmp::Ordering::Greater => "rising",
            std::cmp::Ordering::Equal => "stationary",
        };
        records.push(FlowRecord {
            s_lo: lo,
            s_hi: hi,
            direction,
        });
    }

    println!("regime: {}", set.regime);
    println!("basin boundary s_u: {}", numfmt::human(s_u));
    for r in &records {
        println!(
            "({}, {}): {}",
            numfmt::human(r.s_lo),
            numfmt::human(r.s_hi),
            r.direction
        );
    }

    if config.out.is_some() {
        let bytes = match config.format {
            OutputFormat::Csv => {
                let mut text = String::from("s_lo,s_hi,direction\n");
                for r in &records {
                    text.push_str(&format!(
                        "{},{},{}\n",
                        numfmt::machine(r.s_lo),
                        numfmt::machine(r.s_hi),
                        r.direction
                    ));
                }
                text.into_bytes()
            }
            OutputFormat::Json => json_bytes(&records)?,
        };
        write_machine(config, &bytes)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn initial_state(config: &RunConfig, params: &ModelParams) -> Result<PopulationState, CliError> {
    let lambda = config
        .lambda
        .ok_or_else(|| usage("missing required parameter lambda (--lambda or config file)"))?;
    match (config.preset, config.s1_0, config.s0_0) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Err(usage(
            "preset conflicts with explicit s1-0/s0-0 initial conditions",
        )),
        (Some(preset), None, None) => preset.initial_state(lambda, params).map_err(CliError::from),
        (None, Some(s1), Some(s0)) => {
            PopulationState::new(0.0, s1, s0, lambda).map_err(CliError::from)
        }
        (None, _, _) => Err(usage(
            "initial conditions required: either --preset or both --s1-0 and --s0-0",
        )),
    }
}

fn trajectory_bytes(traj: &Trajectory, format: OutputFormat) -> Result<Vec<u8>, CliError> {
    match format {
        OutputFormat::Csv => {
            let mut bytes = Vec::new();
            traj.write_csv(&mut bytes)?;
            Ok(bytes)
        }
        OutputFormat::Json => json_bytes(&traj.samples),
    }
}

fn cmd_simulate(config: &RunConfig) -> Result<(), CliError> {
    let params = config.require_params()?;
    theta_boundary_warning(params.theta());
    let initial = initial_state(config, &params)?;
    let integrator = config.integrator();
    let traj = integrate(&initial, &params, &integrator).map_err(CliError::from)?;

    let bytes = trajectory_bytes(&traj, config.format)?;
    let to_file = write_machine(config, &bytes)?;
    let mut summary: Box<dyn Write> = if to_file {
        Box::new(io::stdout())
    } else {
        Box::new(io::stderr())
    };
    writeln!(summary, "terminal: {}", traj.terminal.label)?;
    writeln!(summary, "value: {}", numfmt::human(traj.terminal.value))?;
    writeln!(summary, "residual: {:.3e}", traj.terminal.residual)?;
    writeln!(
        summary,
        "t_final: {}",
        numfmt::human(traj.samples.last().map(|s| s.t).unwrap_or(0.0))
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// lambda-star
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct VerdictRecord {
    lambda: f64,
    verdict: LimitLabel,
}

fn lambda_star_bytes(
    result: &LambdaStarResult,
    format: OutputFormat,
) -> Result<Vec<u8>, CliError> {
    let records: Vec<VerdictRecord> = result
        .verdicts
        .iter()
        .map(|&(lambda, verdict)| VerdictRecord { lambda, verdict })
        .collect();
    match format {
        OutputFormat::Csv => {
            let mut text = String::from("lambda,verdict\n");
            for r in &records {
                text.push_str(&format!("{},{}\n", numfmt::machine(r.lambda), r.verdict));
            }
            Ok(text.into_bytes())
        }
        OutputFormat::Json => json_bytes(&records),
    }
}

fn cmd_lambda_star(config: &RunConfig) -> Result<(), CliError> {
    let params = config.require_params()?;
    let tol = config.tol.unwrap_or(DEFAULT_LAMBDA_TOL);
    // The integrator keeps its own convergence tolerance; --tol steers the
    // bisection width here.
    let mut integrator = IntegratorConfig::for_delta(config.delta);
    if let Some(step) = config.step {
        integrator.step = step;
    }
    if let Some(t_max) = config.t_max {
        integrator.t_max = t_max;
    }
    if let Some(stride) = config.stride {
        integrator.stride = stride;
    }
    let result = lambda_star(&params, tol, &integrator).map_err(CliError::from)?;

    match result.lambda_star {
        Some(ls) => println!("lambda_star: {}", numfmt::human(ls)),
        None => println!("lambda_star: none (no invasion of size <= 1/2 disrupts)"),
    }
    println!(
        "bracket: [{}, {}]",
        numfmt::human(result.bracket.0),
        numfmt::human(result.bracket.1)
    );
    println!("probes: {}", result.verdicts.len());

    if config.out.is_some() {
        let bytes = lambda_star_bytes(&result, config.format)?;
        write_machine(config, &bytes)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// halfway-q
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct HalfwayRecord {
    theta: f64,
    q: f64,
    s_u: f64,
    s_b: f64,
    residual: f64,
}

fn cmd_halfway_q(config: &RunConfig) -> Result<(), CliError> {
    let theta = config.require_theta()?;
    let tol = config.tol.unwrap_or(DEFAULT_LAMBDA_TOL);
    let q = halfway_q(theta, tol).map_err(CliError::from)?;
    let params = ModelParams::new(theta, q).map_err(CliError::from)?;
    let (s_u, s_b) = interior_roots(&params)
        .map_err(CliError::from)?
        .expect("halfway q lies strictly inside (0, q_hat)");
    let record = HalfwayRecord {
        theta,
        q,
        s_u,
        s_b,
        residual: s_u - 0.5 * s_b,
    };

    println!("q: {}", numfmt::human(q));
    println!("s_u: {}", numfmt::human(s_u));
    println!("s_b: {}", numfmt::human(s_b));
    println!("residual: {:.3e}", record.residual);

    if config.out.is_some() {
        let bytes = match config.format {
            OutputFormat::Csv => {
                let mut text = String::from("theta,q,s_u,s_b,residual\n");
                text.push_str(&format!(
                    "{},{},{},{},{}\n",
                    numfmt::machine(record.theta),
                    numfmt::machine(record.q),
                    numfmt::machine(record.s_u),
                    numfmt::machine(record.s_b),
                    numfmt::machine(record.residual)
                ));
                text.into_bytes()
            }
            OutputFormat::Json => json_bytes(&vec![&record])?,
        };
        write_machine(config, &bytes)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweeps
// ---------------------------------------------------------------------------

fn cmd_sweep_cheating(config: &RunConfig) -> Result<(), CliError> {
    let theta = config.require_theta()?;
    let grid = config
        .q_grid
        .ok_or_else(|| usage("missing required q grid (--q-grid lo:hi:n or config file)"))?;
    resolve_jobs(config)?; // validated even though this sweep is closed-form
    let records = sweep_total_cheating(theta, &grid.points()).map_err(CliError::from)?;

    let bytes = match config.format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            crate::experiments::write_cheating_csv(&records, &mut buf)?;
            buf
        }
        OutputFormat::Json => json_bytes(&records)?,
    };
    let to_file = write_machine(config, &bytes)?;
    if to_file {
        println!(
            "wrote {} records to {}",
            records.len(),
            config.out.as_ref().unwrap().display()
        );
    } else {
        eprintln!("emitted {} records", records.len());
    }
    Ok(())
}

fn cmd_sweep_lambda_star(config: &RunConfig) -> Result<(), CliError> {
    let grid = config
        .theta_grid
        .ok_or_else(|| usage("missing required theta grid (--theta-grid lo:hi:n or config file)"))?;
    let q_mode = match config.q_mode {
        Some(QMode::Halfway) => QMode::Halfway,
        _ => {
            let q = config.q.ok_or_else(|| {
                usage("fixed q-mode requires --q (or switch to --q-mode halfway)")
            })?;
            QMode::Fixed(q)
        }
    };
    let tol = config.tol.unwrap_or(DEFAULT_LAMBDA_TOL);
    let jobs = resolve_jobs(config)?;
    let mut integrator = IntegratorConfig::for_delta(config.delta);
    if let Some(step) = config.step {
        integrator.step = step;
    }
    if let Some(t_max) = config.t_max {
        integrator.t_max = t_max;
    }

    let records = sweep_lambda_star(&grid.points(), q_mode, tol, config.delta, &integrator, jobs)
        .map_err(CliError::from)?;
    for r in &records {
        match r.status {
            SweepStatus::Ok => {}
            SweepStatus::SkippedRegime => eprintln!(
                "warning: theta = {}, q = {}: skipped, parameters are not tripartite",
                numfmt::human(r.theta),
                numfmt::human(r.q)
            ),
            SweepStatus::ProbeFailed => eprintln!(
                "warning: theta = {}: a probe failed to resolve",
                numfmt::human(r.theta)
            ),
        }
    }

    let bytes = match config.format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            crate::experiments::write_lambda_star_csv(&records, &mut buf)?;
            buf
        }
        OutputFormat::Json => json_bytes(&records)?,
    };
    let to_file = write_machine(config, &bytes)?;
    if to_file {
        println!(
            "wrote {} records to {}",
            records.len(),
            config.out.as_ref().unwrap().display()
        );
    } else {
        eprintln!("emitted {} records", records.len());
    }
    Ok(())
}
