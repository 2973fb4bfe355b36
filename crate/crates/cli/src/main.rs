//! `scqa` command-line front end.
//!
//! Exit codes: 0 success, 1 validation failure, 2 fit failure, 3 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use scqa::dataset::{synth_dataset, Dataset};
use scqa::error::{Error, ErrorClass, Result};
use scqa::io;
use scqa::kinetic::fit_lambda;
use scqa::loss::fit_loss_grid;
use scqa::model::{delta0_from_tc, validate_trace, QubitTimeStats};
use scqa::pipeline::{run_pipeline, summary_text, write_bundle, PipelineConfig};
use scqa::qubit::{build_stats, fit_decay, DecayFit, TimedFit};
use scqa::s21::{fit_s21, nonlinearity_screen, plan_hpd, seed_chain, ResonanceFit, ScreenResult, HPD_DEFAULT_POINTS, HPD_DEFAULT_SPAN};
use scqa::surface::fit_tan_delta;

const ROOT_ENV: &str = "SCQA_DATASET_ROOT";

#[derive(Parser)]
#[command(name = "scqa", version, about = "Superconducting resonator and qubit analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Input file or dataset directory.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Output file (JSON) or directory; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// JSON configuration for the command.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DatasetArgs {
    /// Dataset directory.
    #[arg(long, short, env = ROOT_ENV)]
    input: PathBuf,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset directory or a single trace file.
    Validate(DatasetArgs),
    /// Plan a homophasal frequency sweep.
    PlanHpd {
        #[command(flatten)]
        common: Common,
        /// Seed resonance frequency in Hz (ignored when --input gives a previous fit).
        #[arg(long)]
        f_r_hz: Option<f64>,
        /// Seed loaded quality factor.
        #[arg(long)]
        q_l: Option<f64>,
    },
    /// Fit one S21 trace.
    FitS21(Common),
    /// Fit a Q_int(n̄, T) grid.
    FitLoss(Common),
    /// Fit the penetration depth to sheet inductance versus thickness.
    FitLambda(Common),
    /// Regress 1/Q_TLS0 against p_MS.
    FitTandelta(Common),
    /// Fit a qubit decay log and aggregate coherence statistics.
    FitQubit(Common),
    /// Write a synthetic dataset with known ground truth.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run every analysis stage over a dataset.
    Pipeline(DatasetArgs),
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct HpdConfig {
    n_points: Option<usize>,
    span_linewidths: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct S21Config {
    screen_nonlinear: bool,
}

impl Default for S21Config {
    fn default() -> Self {
        Self { screen_nonlinear: true }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossConfig {
    f_r_hz: f64,
    #[serde(default)]
    t_c_k: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct QubitConfig {
    pair_window_s: f64,
    f_q_hz: Option<f64>,
}

impl Default for QubitConfig {
    fn default() -> Self {
        Self { pair_window_s: PipelineConfig::default().pair_window_s, f_q_hz: None }
    }
}

#[derive(Serialize)]
struct S21Output {
    fit: ResonanceFit,
    screen: ScreenResult,
}

#[derive(Serialize)]
struct QubitOutput {
    fits: Vec<(f64, Option<DecayFit>, Option<String>)>,
    summary: QubitTimeStats,
    tphi_unbounded: usize,
    rejected: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_bar: Option<scqa::model::Estimate>,
}

#[derive(Serialize)]
struct ValidateOutput {
    ok: bool,
    resonators: usize,
    qubits: usize,
    traces: usize,
    findings: Vec<String>,
}

fn load_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => io::read_json(p),
        None => Ok(T::default()),
    }
}

fn required_config<T: DeserializeOwned>(path: &Option<PathBuf>, what: &str) -> Result<T> {
    match path {
        Some(p) => io::read_json(p),
        None => Err(Error::Validation(format!("--config is required ({what})"))),
    }
}

fn input(c: &Common) -> Result<&Path> {
    c.input.as_deref().ok_or_else(|| Error::Validation("--input is required".into()))
}

fn emit<T: Serialize>(value: &T, output: &Option<PathBuf>) -> Result<()> {
    match output {
        Some(p) => io::write_json(p, value),
        None => {
            print!("{}", io::to_json(value)?);
            Ok(())
        }
    }
}

fn validate(a: &DatasetArgs) -> Result<()> {
    let out = if a.input.is_dir() {
        let ds = Dataset::load(&a.input)?;
        ValidateOutput {
            ok: true,
            resonators: ds.resonators.len(),
            qubits: ds.qubits.len(),
            traces: ds.traces.values().map(Vec::len).sum(),
            findings: Vec::new(),
        }
    } else {
        let trace = io::load_trace(&a.input)?;
        let report = validate_trace(&trace);
        ValidateOutput {
            ok: report.is_clean(),
            resonators: 0,
            qubits: 0,
            traces: 1,
            findings: report.findings.iter().map(ToString::to_string).collect(),
        }
    };
    emit(&out, &a.output)?;
    if out.ok {
        Ok(())
    } else {
        Err(Error::Validation(out.findings.join("; ")))
    }
}

fn plan(c: &Common, f_r: Option<f64>, q_l: Option<f64>) -> Result<()> {
    let cfg: HpdConfig = load_config(&c.config)?;
    let (f, q) = match &c.input {
        Some(p) => {
            let prev: S21OutputIn = io::read_json(p)?;
            seed_chain(&prev.fit)?
        }
        None => match (f_r, q_l) {
            (Some(f), Some(q)) => (f, q),
            _ => return Err(Error::Validation("give --f-r-hz and --q-l, or --input with a previous fit".into())),
        },
    };
    let plan = plan_hpd(f, q, cfg.n_points.unwrap_or(HPD_DEFAULT_POINTS), cfg.span_linewidths.unwrap_or(HPD_DEFAULT_SPAN))?;
    emit(&plan, &c.output)
}

#[derive(Deserialize)]
struct S21OutputIn {
    fit: ResonanceFit,
}

fn fit_trace(c: &Common) -> Result<()> {
    let cfg: S21Config = load_config(&c.config)?;
    let trace = io::load_trace(input(c)?)?;
    let mut fit = fit_s21(&trace)?;
    let screen = nonlinearity_screen(&trace, &fit);
    if cfg.screen_nonlinear && screen.flagged {
        fit.accepted = false;
    }
    emit(&S21Output { fit, screen }, &c.output)
}

fn fit_loss(c: &Common) -> Result<()> {
    let cfg: LossConfig = required_config(&c.config, "f_r_hz, optional t_c_k")?;
    let grid = io::parse_loss_grid(&io::read_text(input(c)?)?)?;
    let delta_0 = delta0_from_tc(cfg.t_c_k.unwrap_or(scqa::reference::T_C_K.0))?;
    let fit = fit_loss_grid(&grid, 2.0 * std::f64::consts::PI * cfg.f_r_hz, delta_0)?;
    emit(&fit, &c.output)
}

fn fit_qubit(c: &Common) -> Result<()> {
    let cfg: QubitConfig = load_config(&c.config)?;
    let log = io::parse_decay_log(&io::read_text(input(c)?)?)?;
    let mut fits = Vec::new();
    let mut series = Vec::new();
    for t in &log {
        match fit_decay(&t.trace) {
            Ok(f) => {
                series.push(TimedFit { timestamp_s: t.timestamp_s, kind: t.trace.kind, time: f.time });
                fits.push((t.timestamp_s, Some(f), None));
            }
            Err(e) => fits.push((t.timestamp_s, None, Some(e.to_string()))),
        }
    }
    let stats = build_stats(&series, cfg.pair_window_s)?;
    let summary = QubitTimeStats {
        t1: stats.t1.as_ref().map(|s| s.summary()),
        t2r: stats.t2r.as_ref().map(|s| s.summary()),
        t2e: stats.t2e.as_ref().map(|s| s.summary()),
        tphi: stats.tphi.as_ref().map(|s| s.summary()),
    };
    let q_bar = cfg.f_q_hz.and_then(|f| stats.q_bar(f));
    emit(&QubitOutput { fits, summary, tphi_unbounded: stats.tphi_unbounded, rejected: stats.rejected, q_bar }, &c.output)
}

fn synth(c: &Common, seed: u64) -> Result<()> {
    let out = c.output.as_deref().ok_or_else(|| Error::Validation("--output directory is required".into()))?;
    let (ds, truth) = synth_dataset(seed);
    ds.write(out)?;
    io::write_json(&out.join("truth.json"), &truth)
}

fn pipeline(a: &DatasetArgs) -> Result<bool> {
    let cfg: PipelineConfig = load_config(&a.config)?;
    let ds = Dataset::load(&a.input)?;
    let report = run_pipeline(&ds, &cfg)?;
    match &a.output {
        Some(dir) => write_bundle(&report, dir)?,
        None => print!("{}", summary_text(&report)),
    }
    for f in &report.failures {
        eprintln!("warning: {f}");
    }
    Ok(report.failures.is_empty())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Validation => 1,
        ErrorClass::Fit => 2,
        ErrorClass::Io => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(a) => validate(a),
        Command::PlanHpd { common, f_r_hz, q_l } => plan(common, *f_r_hz, *q_l),
        Command::FitS21(c) => fit_trace(c),
        Command::FitLoss(c) => fit_loss(c),
        Command::FitLambda(c) => input(c)
            .and_then(|p| io::read_text(p))
            .and_then(|t| io::parse_lambda_points(&t))
            .and_then(|pts| fit_lambda(&pts))
            .and_then(|fit| emit(&fit, &c.output)),
        Command::FitTandelta(c) => input(c)
            .and_then(|p| io::read_text(p))
            .and_then(|t| io::parse_tan_delta_points(&t))
            .and_then(|pts| fit_tan_delta(&pts))
            .and_then(|fit| emit(&fit, &c.output)),
        Command::FitQubit(c) => fit_qubit(c),
        Command::Synth { common, seed } => synth(common, *seed),
        Command::Pipeline(a) => match pipeline(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(2),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
