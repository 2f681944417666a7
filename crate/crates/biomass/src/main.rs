use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use biomass::cli;

#[derive(Parser)]
#[command(
    name = "biomass",
    version,
    about = "Dry-biomass composition estimation from pasture images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill missing white/red clover labels in a labels CSV
    Impute {
        /// Labels CSV to read
        #[arg(long)]
        labels: PathBuf,
        /// Imputation method
        #[arg(long, value_parser = ["mean", "median", "regression"])]
        method: String,
        /// Regression passes (regression method only)
        #[arg(long, default_value_t = 5)]
        iterations: usize,
        /// Seed for the regression initialization
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rows used by each regression fit
        #[arg(long, default_value = "all", value_parser = ["all", "complete-only"])]
        fit_scope: String,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Produce a seeded train/validation split manifest
    Split {
        #[arg(long)]
        labels: PathBuf,
        /// Number of validation images
        #[arg(long)]
        val_count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Manifest output path
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from a run configuration file
    Train {
        /// key=value run configuration
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides out_dir in the config)
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Predict biomass percentages for a directory of images
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory of PNG/JPEG images
        #[arg(long)]
        images: PathBuf,
        /// Prediction CSV output path
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-component RMSE/MAE of predictions against ground truth
    Evaluate {
        /// Prediction CSV (as written by predict)
        #[arg(long)]
        predictions: PathBuf,
        /// Labels CSV with complete white/red values
        #[arg(long)]
        truth: PathBuf,
        /// Overall row aggregation
        #[arg(long, default_value = "pooled", value_parser = ["pooled", "per-component"])]
        overall: String,
        /// Optional metrics CSV output path
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write n augmented variants of one image for visual inspection
    AugmentPreview {
        #[arg(long)]
        image: PathBuf,
        /// Optional run configuration supplying augment.* ranges and seed
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let result = match &args.command {
        Command::Impute {
            labels,
            method,
            iterations,
            seed,
            fit_scope,
            out,
        } => cli::cmd_impute(labels, method, *iterations, *seed, fit_scope, out),
        Command::Split {
            labels,
            val_count,
            seed,
            out,
        } => cli::cmd_split(labels, *val_count, *seed, out),
        Command::Train { config, out_dir } => cli::cmd_train(config, out_dir.as_deref()),
        Command::Predict {
            checkpoint,
            images,
            out,
        } => cli::cmd_predict(checkpoint, images, out),
        Command::Evaluate {
            predictions,
            truth,
            overall,
            out,
        } => cli::cmd_evaluate(predictions, truth, overall, out.as_deref()),
        Command::AugmentPreview {
            image,
            config,
            n,
            out_dir,
        } => cli::cmd_augment_preview(image, config.as_deref(), *n, out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
