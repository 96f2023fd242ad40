use clap::{Parser, Subcommand};
use pag_core::report::{self, ReportError, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Prostate Age Gap pipeline.
#[derive(Debug, Parser)]
#[command(name = "pag", version)]
struct Cli {
    /// JSON run config; defaults apply to every field it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config's `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic phantom cohort.
    Synth,
    /// Normalize, crop and slice every included patient.
    Preprocess,
    /// Patient-level train/test split and cross-validation folds.
    Split,
    /// Cross-validated training of the slice-level age regressor.
    Train,
    /// Per-patient PAG for the analysis set and out-of-fold PAG for training patients.
    Predict,
    /// Tables, odds ratios, ROC curves and confusion matrices.
    Analyze,
    /// SVG figures from the analysis bundle.
    Plot,
    /// Every stage in order.
    RunAll,
    /// Print the resolved run config as JSON.
    ShowConfig,
}

fn run(cli: Cli) -> Result<(), ReportError> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), cli.seed, cli.out)?;
    match cli.command {
        Command::Synth => report::cmd_synth(&cfg)?,
        Command::Preprocess => report::cmd_preprocess(&cfg)?,
        Command::Split => report::cmd_split(&cfg)?,
        Command::Train => report::cmd_train(&cfg)?,
        Command::Predict => report::cmd_predict(&cfg)?,
        Command::Analyze => report::cmd_analyze(&cfg)?,
        Command::Plot => report::cmd_plot(&cfg)?,
        Command::RunAll => report::run_all(&cfg)?,
        Command::ShowConfig => {
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            return Ok(());
        }
    }
    eprintln!("done; outputs under {} (config hash {})", cfg.out_dir.display(), cfg.config_hash());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
