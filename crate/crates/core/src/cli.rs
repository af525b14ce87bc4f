//! Command-line front end. `run` parses arguments, writes JSON or CSV to
//! stdout (or `--out`), diagnostics to stderr, and returns the exit code:
//! 0 success, 1 usage or domain error (including a failed validation),
//! 2 infeasible target, 3 oracle non-convergence.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::bounded::{
    build_plan, plan_for_lambda0, spike_time_bounds, stall_threshold, PiecewisePlan, Regime, Segment, SpikeTimeBounds,
};
use crate::error::{Error, Result};
use crate::json::write_json;
use crate::models::{theta_to_sniper, ModelKind, ModelSpec, PhaseModel, ThetaReduction};
use crate::oracle::{compare_with_analytic, TranscriptionSpec};
use crate::simulator::{export_trajectory, simulate_on_theta, simulate_plan, ExportFormat, SimulationConfig, Trajectory};
use crate::unbounded::energy_sensitivity;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "spikestim",
    version,
    about = "Minimum-power stimuli that fire a phase-model neuron at a chosen time",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Design the optimal stimulus for a target spike time.
    Design(DesignArgs),
    /// Feasible spike-time window under an amplitude bound.
    Bounds(BoundsArgs),
    /// Tabulate λ₀, T, energy and dE/dT over a grid.
    Sweep(SweepArgs),
    /// Simulate the designed stimulus and export the trajectory.
    Simulate(SimulateArgs),
    /// Compare the design with a brute-force transcription.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// sinusoidal, sniper or theta
    #[arg(long)]
    model: ModelKind,
    /// Natural frequency ω (sinusoidal and sniper; derived for theta).
    #[arg(long)]
    omega: Option<f64>,
    /// PRC amplitude z_d (theta default 1).
    #[arg(long)]
    zd: Option<f64>,
    /// Bias current (theta neuron only).
    #[arg(long)]
    ib: Option<f64>,
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Target spike time.
    #[arg(long = "T")]
    target: f64,
    /// Amplitude bound M on |I|.
    #[arg(long)]
    max_amp: Option<f64>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Amplitude bound M on |I|.
    #[arg(long, allow_negative_numbers = true)]
    max_amp: f64,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SweepVar {
    #[value(name = "lambda0")]
    Lambda0,
    #[value(name = "T")]
    T,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Swept variable.
    #[arg(long)]
    sweep: SweepVar,
    /// First grid value.
    #[arg(long, allow_negative_numbers = true)]
    from: f64,
    /// Last grid value.
    #[arg(long, allow_negative_numbers = true)]
    to: f64,
    /// Number of grid points.
    #[arg(long)]
    points: usize,
    /// Amplitude bound M on |I|.
    #[arg(long)]
    max_amp: Option<f64>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Target spike time.
    #[arg(long = "T")]
    target: f64,
    /// Amplitude bound M on |I|.
    #[arg(long)]
    max_amp: Option<f64>,
    /// RK4 step (default T/10⁴).
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Target spike time.
    #[arg(long = "T")]
    target: f64,
    /// Amplitude bound M on |I|.
    #[arg(long)]
    max_amp: Option<f64>,
    /// Control intervals in the transcription.
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    /// Largest accepted relative energy gap.
    #[arg(long, default_value_t = 0.02)]
    tol: f64,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A user model together with the model the design runs on.
struct Resolved {
    user: PhaseModel,
    reduction: Option<ThetaReduction>,
}

impl Resolved {
    fn new(args: &ModelArgs) -> Result<Self> {
        let user = PhaseModel::try_from(ModelSpec {
            kind: args.model,
            omega: args.omega,
            zd: args.zd,
            ib: args.ib,
        })?;
        let reduction = match user.kind() {
            ModelKind::ThetaNeuron => Some(theta_to_sniper(&user)?),
            _ => None,
        };
        Ok(Self { user, reduction })
    }

    fn design(&self) -> PhaseModel {
        self.reduction.map_or(self.user, |r| r.sniper)
    }

    fn simulate(&self, plan: &PiecewisePlan, config: &SimulationConfig) -> Result<Trajectory> {
        match &self.reduction {
            Some(r) => simulate_on_theta(plan, r, config),
            None => simulate_plan(plan, config),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DesignReport {
    pub model: PhaseModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduced_model: Option<PhaseModel>,
    #[serde(rename = "T")]
    pub target: f64,
    pub bound: Option<f64>,
    pub regime: Regime,
    pub bounds: Option<SpikeTimeBounds>,
    pub lambda0: Option<f64>,
    pub energy: Option<f64>,
    #[serde(rename = "dEdT")]
    pub energy_sensitivity: Option<f64>,
    pub plan: Option<PiecewisePlan>,
    /// Plan segments pulled back to the theta-neuron phase.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_segments: Option<Vec<Segment>>,
    pub achieved_spike_time: Option<f64>,
    pub simulated_energy: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct BoundsReport {
    pub model: PhaseModel,
    pub bound: f64,
    /// "I" when the bound can stall the phase (window unbounded above),
    /// "II" otherwise.
    pub case: &'static str,
    pub stall_threshold: f64,
    #[serde(flatten)]
    pub bounds: SpikeTimeBounds,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InfeasibleTime { .. } | Error::OutsideWindow { .. } | Error::InfeasibleCostate { .. } => {
            EXIT_INFEASIBLE
        }
        Error::OracleNoConvergence { .. } => EXIT_NO_CONVERGENCE,
        _ => EXIT_USAGE,
    }
}

fn emit(out: &Option<PathBuf>, stdout: &mut dyn Write, body: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, body)?,
        None => stdout.write_all(body)?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: &Option<PathBuf>, stdout: &mut dyn Write, value: &T) -> Result<()> {
    let mut buf = Vec::new();
    write_json(&mut buf, value)?;
    buf.push(b'\n');
    emit(out, stdout, &buf)
}

fn design_report(args: &DesignArgs) -> Result<(DesignReport, i32)> {
    let models = Resolved::new(&args.model)?;
    let design = models.design();
    let bounds = args.max_amp.map(|m| spike_time_bounds(&design, m)).transpose()?;
    let mut report = DesignReport {
        model: models.user,
        reduced_model: models.reduction.map(|r| r.sniper),
        target: args.target,
        bound: args.max_amp,
        regime: bounds.map_or(Regime::AnalyticOnly, |b| b.classify(args.target)),
        bounds,
        lambda0: None,
        energy: None,
        energy_sensitivity: None,
        plan: None,
        theta_segments: None,
        achieved_spike_time: None,
        simulated_energy: None,
    };
    let plan = match build_plan(&design, args.max_amp, args.target) {
        Ok(plan) => plan,
        Err(e) if exit_code(&e) == EXIT_INFEASIBLE => {
            report.regime = Regime::Infeasible;
            return Ok((report, EXIT_INFEASIBLE));
        }
        Err(e) => return Err(e),
    };
    let traj = models.simulate(&plan, &SimulationConfig::default())?;
    report.lambda0 = Some(plan.lambda0);
    report.energy = Some(plan.energy()?);
    report.energy_sensitivity = Some(energy_sensitivity(&design, plan.lambda0));
    report.theta_segments = models.reduction.map(|r| plan.map_phases(|p| r.to_theta_phase(p)));
    report.achieved_spike_time = Some(traj.spike_time);
    report.simulated_energy = Some(traj.energy);
    report.plan = Some(plan);
    Ok((report, EXIT_OK))
}

fn cmd_design(args: &DesignArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let (report, code) = design_report(args)?;
    if code == EXIT_INFEASIBLE {
        let _ = writeln!(stderr, "error: spike time {} is not attainable", args.target);
    }
    emit_json(&args.out, stdout, &report)?;
    Ok(code)
}

fn cmd_bounds(args: &BoundsArgs, stdout: &mut dyn Write) -> Result<i32> {
    let models = Resolved::new(&args.model)?;
    let design = models.design();
    let bounds = spike_time_bounds(&design, args.max_amp)?;
    let report = BoundsReport {
        model: models.user,
        bound: args.max_amp,
        case: if bounds.has_finite_max() { "II" } else { "I" },
        stall_threshold: stall_threshold(&design),
        bounds,
    };
    emit_json(&args.out, stdout, &report)?;
    Ok(EXIT_OK)
}

fn grid(from: f64, to: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![from],
        n => (0..n)
            .map(|k| {
                if k == n - 1 {
                    to
                } else {
                    from + (to - from) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// One sweep row: (λ₀, T, energy); `None` where no design exists.
fn sweep_row(design: &PhaseModel, bound: Option<f64>, var: SweepVar, x: f64) -> Result<Option<(f64, f64, f64)>> {
    let plan = match var {
        SweepVar::Lambda0 => plan_for_lambda0(design, bound, x),
        SweepVar::T => build_plan(design, bound, x),
    };
    let plan = match plan {
        Ok(p) => p,
        Err(e) if exit_code(&e) == EXIT_INFEASIBLE => return Ok(None),
        Err(e) => return Err(e),
    };
    let t = match var {
        SweepVar::Lambda0 => plan.spike_time()?,
        SweepVar::T => x,
    };
    Ok(Some((plan.lambda0, t, plan.energy()?)))
}

fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<i32> {
    let models = Resolved::new(&args.model)?;
    let design = models.design();
    if !args.from.is_finite() || !args.to.is_finite() {
        return Err(Error::Domain("sweep limits must be finite".into()));
    }
    let xs = grid(args.from, args.to, args.points);
    if xs.is_empty() {
        return Err(Error::Domain("empty sweep grid (--points must be at least 1)".into()));
    }
    let rows: Vec<Result<Option<(f64, f64, f64)>>> =
        xs.par_iter().map(|&x| sweep_row(&design, args.max_amp, args.sweep, x)).collect();
    let mut body = String::from("lambda0,T,energy,dEdT\n");
    for (x, row) in xs.iter().zip(rows) {
        match row? {
            Some((l0, t, e)) => {
                let h = energy_sensitivity(&design, l0);
                body.push_str(&format!("{l0:.16e},{t:.16e},{e:.16e},{h:.16e}\n"));
            }
            None => match args.sweep {
                SweepVar::Lambda0 => body.push_str(&format!("{x:.16e},,,\n")),
                SweepVar::T => body.push_str(&format!(",{x:.16e},,\n")),
            },
        }
    }
    emit(&args.out, stdout, body.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<i32> {
    let models = Resolved::new(&args.model)?;
    let plan = build_plan(&models.design(), args.max_amp, args.target)?;
    let config = SimulationConfig { step: args.step, ..SimulationConfig::default() };
    let traj = models.simulate(&plan, &config)?;
    let format = match args.format {
        Format::Csv => ExportFormat::Csv,
        Format::Json => ExportFormat::Json,
    };
    let mut buf = Vec::new();
    export_trajectory(&traj, format, &mut buf)?;
    emit(&args.out, stdout, &buf)?;
    Ok(EXIT_OK)
}

fn cmd_validate(args: &ValidateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let models = Resolved::new(&args.model)?;
    let spec = TranscriptionSpec::with_steps(args.steps);
    let report = compare_with_analytic(&models.user, args.target, args.max_amp, &spec)?;
    emit_json(&args.out, stdout, &report)?;
    if !report.converged {
        let _ = writeln!(stderr, "error: oracle stopped before reaching stationarity");
        return Ok(EXIT_NO_CONVERGENCE);
    }
    let passed = report.rel_gap.abs() <= args.tol && !report.fail;
    let _ = writeln!(stderr, "{}", if passed { "PASS" } else { "FAIL" });
    for r in &report.reasons {
        let _ = writeln!(stderr, "  {r}");
    }
    if report.rel_gap.abs() > args.tol {
        let _ = writeln!(stderr, "  relative gap {} exceeds {}", report.rel_gap, args.tol);
    }
    Ok(if passed { EXIT_OK } else { EXIT_USAGE })
}

/// Splice the contents of `--config FILE` (a JSON object of flag names
/// to values) in front of the explicit flags, so explicit flags win.
fn expand_config(mut args: Vec<String>) -> Result<Vec<String>> {
    let pos = args.iter().position(|a| a == "--config" || a.starts_with("--config="));
    let Some(pos) = pos else { return Ok(args) };
    let path = if let Some(p) = args[pos].strip_prefix("--config=") {
        let p = p.to_string();
        args.remove(pos);
        p
    } else {
        if pos + 1 >= args.len() {
            return Err(Error::Domain("--config needs a file name".into()));
        }
        args.remove(pos);
        args.remove(pos)
    };
    let text = fs::read_to_string(&path)?;
    let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)?;
    let mut flags = Vec::new();
    let mut command = None;
    for (key, value) in map {
        let text = match value {
            serde_json::Value::Null => continue,
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            other => return Err(Error::Domain(format!("config value for `{key}` must be a string or number, got {other}"))),
        };
        if key == "command" {
            command = Some(text);
        } else {
            flags.push(format!("--{}={text}", key.replace('_', "-")));
        }
    }
    let has_command = args.get(1).is_some_and(|a| !a.starts_with('-'));
    let insert_at = if has_command {
        2
    } else if let Some(c) = command {
        args.insert(1.min(args.len()), c);
        2
    } else {
        1.min(args.len())
    };
    args.splice(insert_at..insert_at, flags);
    Ok(args)
}

/// Parse `args` (including the program name) and execute the command.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{rendered}");
                EXIT_OK
            };
        }
    };
    let result = match &cli.command {
        Command::Design(a) => cmd_design(a, stdout, stderr),
        Command::Bounds(a) => cmd_bounds(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Validate(a) => cmd_validate(a, stdout, stderr),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
