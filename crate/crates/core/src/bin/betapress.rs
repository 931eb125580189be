//! Command-line interface: fit, diagnose, simulate, press-plot.
//!
//! All primary payloads are deterministic for fixed inputs and seeds —
//! no timestamps or machine-specific content — so identical invocations
//! produce byte-identical output. Results go to stdout (or `--out`);
//! errors go to stderr as a one-object JSON document with a stable
//! `kind` tag, and the process exits 2 for usage/configuration errors,
//! 3 for data errors, and 4 for numerical failures. A fit that stops at
//! the iteration cap is not an error: the payload reports
//! `converged: false` and the exit code stays 0.

use std::path::PathBuf;
use std::process::ExitCode;

use betapress_core::config::ModelConfig;
use betapress_core::data::Dataset;
use betapress_core::diagnostics::{press_plot_data, DiagnosticsReport, PressPlotRow};
use betapress_core::estimation::{fit, FitResult};
use betapress_core::simulation::{build_scenario, run_monte_carlo, DispersionLevel};
use betapress_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "betapress",
    version,
    about = "Beta regression with varying dispersion: fitting, leave-one-out prediction diagnostics, and Monte Carlo experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a model by maximum likelihood and print the fit as JSON.
    Fit(FitArgs),
    /// Fit a model and report residuals, leverage, PRESS, and the
    /// model-selection statistic family.
    Diagnose(DiagnoseArgs),
    /// Run a Monte Carlo experiment cell from the scenario catalog.
    Simulate(SimulateArgs),
    /// Emit the PRESS-plot table (component, threshold, flag) as CSV.
    PressPlot(PressPlotArgs),
}

/// Flags shared by every command that fits a model to a CSV file.
#[derive(Args)]
struct ModelArgs {
    /// CSV file with a header row ('.' decimals, ',' separators).
    #[arg(long)]
    data: PathBuf,
    /// Name of the response column; all other columns become covariates.
    #[arg(long)]
    response: String,
    /// TOML or JSON model configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mean formula, e.g. "b1 + b2*x1" (overrides the config file).
    #[arg(long)]
    mean: Option<String>,
    /// Mean link: logit or loglog.
    #[arg(long = "mean-link")]
    mean_link: Option<String>,
    /// Precision formula, e.g. "g1 + g2*x1"; default g1 (constant).
    #[arg(long = "prec")]
    precision: Option<String>,
    /// Precision link: log, sqrt, or identity.
    #[arg(long = "prec-link")]
    precision_link: Option<String>,
    /// Comma-separated starting values for the mean parameters.
    #[arg(long = "mean-start", value_delimiter = ',', allow_hyphen_values = true)]
    mean_start: Option<Vec<f64>>,
    /// Comma-separated starting values for the precision parameters.
    #[arg(long = "prec-start", value_delimiter = ',', allow_hyphen_values = true)]
    precision_start: Option<Vec<f64>>,
    /// Cap on Fisher-scoring iterations.
    #[arg(long = "max-iterations")]
    max_iterations: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Write the JSON payload here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Write the JSON payload here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-observation table to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario id, e.g. s4, s1-high, s8, nl-mean, nl-disp-correct.
    #[arg(long)]
    scenario: String,
    /// Sample size (must be in the scenario's size list).
    #[arg(long)]
    n: usize,
    /// Fixed-precision level, for scenarios with constant dispersion.
    #[arg(long)]
    phi: Option<f64>,
    /// Dispersion-intensity level, for varying-dispersion scenarios.
    #[arg(long)]
    lambda: Option<f64>,
    /// Monte Carlo replications.
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// RNG seed; stream 0 draws the design, stream r the r-th responses.
    #[arg(long)]
    seed: u64,
    /// Write per-replication statistics to this CSV file.
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Write the JSON payload here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PressPlotArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Write the CSV table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Diagnose(args) => run_diagnose(args),
        Command::Simulate(args) => run_simulate(args),
        Command::PressPlot(args) => run_press_plot(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            let payload = serde_json::json!({
                "error": {
                    "kind": error.kind(),
                    "message": error.to_string(),
                }
            });
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&payload).expect("error payload serializes")
            );
            ExitCode::from(error.exit_code() as u8)
        }
    }
}

/// Assemble the effective configuration: file first, flags override.
fn build_config(args: &ModelArgs) -> Result<ModelConfig> {
    let mut config = match &args.config {
        Some(path) => ModelConfig::from_path(path)?,
        None => {
            let mean = args.mean.clone().ok_or_else(|| {
                Error::Config("pass --mean or a --config file with a mean formula".into())
            })?;
            ModelConfig::with_mean(mean)
        }
    };
    if let Some(mean) = &args.mean {
        config.mean = mean.clone();
    }
    if let Some(link) = &args.mean_link {
        config.mean_link = link.clone();
    }
    if let Some(precision) = &args.precision {
        config.precision = precision.clone();
    }
    if let Some(link) = &args.precision_link {
        config.precision_link = link.clone();
    }
    if let Some(start) = &args.mean_start {
        config.mean_start = Some(start.clone());
    }
    if let Some(start) = &args.precision_start {
        config.precision_start = Some(start.clone());
    }
    if let Some(cap) = args.max_iterations {
        config.max_iterations = Some(cap);
    }
    Ok(config)
}

fn fit_from_args(args: &ModelArgs) -> Result<(Dataset, FitResult)> {
    let data = Dataset::from_csv_path(&args.data, &args.response)?;
    let config = build_config(args)?;
    let (model, options) = config.resolve(&data)?;
    let fitted = fit(&model, &data, &options)?;
    Ok((data, fitted))
}

fn emit_text(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: &Option<PathBuf>, payload: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(payload)
        .map_err(|e| Error::Data(format!("serialization failed: {e}")))?;
    text.push('\n');
    emit_text(out, &text)
}

fn run_fit(args: FitArgs) -> Result<()> {
    let (_, fitted) = fit_from_args(&args.model)?;
    emit_json(&args.out, &fitted.report())
}

/// Payload of `diagnose`: the fit summary (carrying the convergence
/// flag) plus the derived statistics.
#[derive(Serialize)]
struct DiagnosePayload {
    fit: betapress_core::estimation::FitReport,
    diagnostics: DiagnosticsReport,
}

fn run_diagnose(args: DiagnoseArgs) -> Result<()> {
    let (data, fitted) = fit_from_args(&args.model)?;
    let null_model = fitted.model().null_spec();
    let null_fit = fit(&null_model, &data, &Default::default())?;
    let report = DiagnosticsReport::compute(&fitted, &null_fit)?;
    if let Some(path) = &args.csv {
        let file = std::fs::File::create(path)?;
        report.write_csv(file)?;
    }
    emit_json(
        &args.out,
        &DiagnosePayload {
            fit: fitted.report(),
            diagnostics: report,
        },
    )
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let level = match (args.phi, args.lambda) {
        (Some(phi), None) => DispersionLevel::Phi(phi),
        (None, Some(lambda)) => DispersionLevel::Lambda(lambda),
        _ => {
            return Err(Error::Simulation(
                "pass exactly one of --phi or --lambda".into(),
            ))
        }
    };
    let scenario = build_scenario(&args.scenario)?;
    let summary = run_monte_carlo(&scenario, args.n, &level, args.reps, args.seed)?;
    if let Some(path) = &args.dump {
        let file = std::fs::File::create(path)?;
        summary.write_rows_csv(file)?;
    }
    emit_json(&args.out, &summary)
}

fn press_plot_csv(rows: &[PressPlotRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["t", "component", "threshold", "flagged"])?;
    for row in rows {
        writer.write_record([
            row.t.to_string(),
            format!("{}", row.component),
            format!("{}", row.threshold),
            row.flagged.to_string(),
        ])?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Data(format!("csv buffer error: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("csv encoding error: {e}")))
}

fn run_press_plot(args: PressPlotArgs) -> Result<()> {
    let (_, fitted) = fit_from_args(&args.model)?;
    let rows = press_plot_data(&fitted)?;
    emit_text(&args.out, &press_plot_csv(&rows)?)
}
