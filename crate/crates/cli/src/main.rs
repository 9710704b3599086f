use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use funnelguard_cli::{default_config, run_experiment, CliError, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "funnelguard", version, about = "Funnel tracking with a privacy-noised boundary")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discrete filter statistics against the stationary covariance
    Table1(RunArgs),
    /// Closed-loop tracking inside the noisy funnel
    Track(RunArgs),
    /// Empirical (epsilon, delta) bounds from the filter's steady state
    PrivacyReport(RunArgs),
    /// Tracking runs on two adjacent boundaries with a shared seed
    DpVerify(RunArgs),
    /// Fast-filter deviation and envelope checks
    OuCheck(RunArgs),
    /// Print the effective configuration as TOML
    PrintConfig(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; defaults to the built-in reference configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a key, e.g. --set observer.varsigma=0.01
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            ExperimentConfig::from_toml(&text)?
        }
        None => default_config(),
    };
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = args.seed {
        cfg.sim.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (experiment, args) = match cli.command {
        Command::Table1(a) => (Experiment::Table1, a),
        Command::Track(a) => (Experiment::Track, a),
        Command::PrivacyReport(a) => (Experiment::PrivacyReport, a),
        Command::DpVerify(a) => (Experiment::DpVerify, a),
        Command::OuCheck(a) => (Experiment::OuCheck, a),
        Command::PrintConfig(a) => {
            print!("{}", load(&a)?.to_toml()?);
            return Ok(());
        }
    };
    let mut cfg = load(&args)?;
    cfg.experiment = experiment;
    let out = run_experiment(&cfg)?;
    println!("{}: {}", experiment.name(), out.summary);
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report_line());
            ExitCode::from(2)
        }
    }
}
