use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nica_cli::{calibrate, run_experiment, CliError, ExperimentConfig, RunOptions};
use serde_json::json;

/// Exit status when some seeds or methods failed but the run finished.
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "nica", version, about = "Run nonlinear ICA experiments from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its outputs.
    Run(RunArgs),
    /// Run an experiment and freeze thresholds into fixtures.json.
    Calibrate(RunArgs),
    /// Check a config without running it.
    Validate { config: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Output directory; defaults to the config's output_dir, then
    /// $NICA_OUT_DIR/<config name>, then ./nica-out/<config name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Seeds run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, env = "NICA_OUT_DIR", hide_env_values = true)]
    out_root: Option<PathBuf>,
}

fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ExperimentConfig::load(&text)
}

fn prepare(args: &RunArgs) -> Result<(ExperimentConfig, RunOptions), CliError> {
    let mut cfg = load(&args.config)?;
    if let Some(n) = args.seeds {
        cfg.n_seeds = n;
        cfg.validate()?;
    }
    let stem = args
        .config
        .file_stem()
        .map(PathBuf::from)
        .unwrap_or_else(|| "experiment".into());
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| args.out_root.clone().unwrap_or_else(|| "nica-out".into()).join(stem));
    Ok((
        cfg,
        RunOptions {
            out_dir,
            jobs: args.jobs,
        },
    ))
}

fn execute(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!(
                "{}",
                json!({ "valid": true, "config_hash": cfg.hash(), "methods": cfg.methods() })
            );
            Ok(0)
        }
        Command::Run(args) => {
            let (cfg, opts) = prepare(&args)?;
            let summary = run_experiment(&cfg, &opts)?;
            println!(
                "{}",
                json!({
                    "status": if summary.is_partial() { "partial" } else { "ok" },
                    "out_dir": summary.out_dir,
                    "config_hash": summary.config_hash,
                    "rows": summary.records.len(),
                    "failed": summary.failures(),
                })
            );
            Ok(if summary.is_partial() { EXIT_PARTIAL } else { 0 })
        }
        Command::Calibrate(args) => {
            let (cfg, opts) = prepare(&args)?;
            let fixtures = calibrate(&cfg, &opts)?;
            println!(
                "{}",
                json!({
                    "status": "ok",
                    "fixtures": opts.out_dir.join(nica_cli::calibrate::FIXTURES_FILE),
                    "metrics": fixtures.metrics.keys().collect::<Vec<_>>(),
                })
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
