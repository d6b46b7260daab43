//! Command-line front end: `synthgen`, `preprocess`, `run`, `report`.
//!
//! Config keys are overridden with dotted flags such as `--cv.seed=3`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcsfusion::error::{Error, Result};
use pcsfusion::eval::ExperimentReport;
use pcsfusion::pipeline::{self, format_deltas, parse_override, report_delta, PipelineConfig};
use pcsfusion::signal::io::write_dataset;
use pcsfusion::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(name = "pcsfusion", version, about = "EEG reaction-time regression pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (trial files plus manifest).
    Synthgen(SynthArgs),
    /// Decimate, epoch, drop outliers and band-pass a dataset.
    Preprocess(ConfigArgs),
    /// Preprocess, cross-validate every cell and write the report files.
    Run(ConfigArgs),
    /// Print the comparison table and fused-model deltas of a report.
    Report {
        /// Path to a report JSON file.
        report: PathBuf,
        /// Print the CSV table instead of the text table.
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "n_trials")]
    n_trials: Option<usize>,
    #[arg(long = "d_channels")]
    d_channels: Option<usize>,
    #[arg(long)]
    fs: Option<f64>,
    #[arg(long = "duration_s")]
    duration_s: Option<f64>,
    #[arg(long = "alpha_coupling", allow_hyphen_values = true)]
    alpha_coupling: Option<f64>,
    #[arg(long = "phase_coupling")]
    phase_coupling: Option<f64>,
    #[arg(long = "noise_std")]
    noise_std: Option<f64>,
    #[arg(long = "amplitude_jitter")]
    amplitude_jitter: Option<f64>,
    #[arg(long = "coupled_channels")]
    coupled_channels: Option<usize>,
    #[arg(long = "n_subjects")]
    n_subjects: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SynthArgs {
    fn config(&self) -> SynthConfig {
        let d = SynthConfig::default();
        SynthConfig {
            n_trials: self.n_trials.unwrap_or(d.n_trials),
            d_channels: self.d_channels.unwrap_or(d.d_channels),
            fs: self.fs.unwrap_or(d.fs),
            duration_s: self.duration_s.unwrap_or(d.duration_s),
            alpha_coupling: self.alpha_coupling.unwrap_or(d.alpha_coupling),
            phase_coupling: self.phase_coupling.unwrap_or(d.phase_coupling),
            noise_std: self.noise_std.unwrap_or(d.noise_std),
            amplitude_jitter: self.amplitude_jitter.unwrap_or(d.amplitude_jitter),
            coupled_channels: self.coupled_channels.unwrap_or(d.coupled_channels),
            n_subjects: self.n_subjects.unwrap_or(d.n_subjects),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; built-in defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Dotted `--section.key=value` arguments are config overrides; they are
/// removed before clap sees the rest.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        let is_override = a.starts_with("--") && a.split_once('=').is_some_and(|(k, _)| k.contains('.'));
        if is_override {
            overrides.push(parse_override(&a)?);
        } else {
            rest.push(a);
        }
    }
    Ok((rest, overrides))
}

fn execute(cli: Cli, overrides: &[(String, String)]) -> Result<()> {
    let load = |args: &ConfigArgs| PipelineConfig::load(args.config.as_deref(), overrides);
    match cli.command {
        Command::Synthgen(args) => {
            let trials = generate(&args.config())?;
            let manifest = write_dataset(&args.out, &trials)?;
            println!("wrote {} trials, manifest {}", trials.len(), manifest.display());
        }
        Command::Preprocess(args) => {
            let cfg = load(&args)?;
            let (_, log) = pipeline::run_preprocess(&cfg)?;
            println!(
                "input {} trials, used {}, excluded {}; outputs in {}",
                log.n_input,
                log.n_used,
                log.n_excluded,
                cfg.data.output_dir.display()
            );
        }
        Command::Run(args) => {
            let cfg = load(&args)?;
            let report = pipeline::run(&cfg)?;
            print!("{}", report.to_table_text());
            if let Ok(deltas) = report_delta(&report) {
                print!("{}", format_deltas(&deltas));
            }
            println!("report written to {}", pipeline::report_path(&cfg).display());
        }
        Command::Report { report, csv } => {
            let text = std::fs::read_to_string(&report).map_err(|e| Error::io(&report, e))?;
            let report = ExperimentReport::from_json(&text)?;
            if csv {
                print!("{}", report.to_table_csv());
            } else {
                print!("{}", report.to_table_text());
            }
            print!("{}", format_deltas(&report_delta(&report)?));
        }
    }
    Ok(())
}

fn fail(e: &Error) -> ExitCode {
    let body = serde_json::json!({ "error": { "category": e.category(), "message": e.to_string() } });
    eprintln!("{body}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    let cli = Cli::parse_from(args);
    match execute(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
