//! Command implementations behind the `biomass` binary.
//!
//! Exit-code contract: 0 success, 2 input/configuration error, 3
//! runtime/training error. Every command is deterministic given its
//! arguments and seed.

use std::path::{Path, PathBuf};

use crate::augment::{self, AugmentConfig};
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data;
use crate::error::{Error, Result};
use crate::img::Image;
use crate::impute::{self, FitScope, ImputationMethod};
use crate::pipeline::{self, Model, OverallMode};
use crate::rng::rng_from_seed;

/// An error tagged with the exit code it should produce.
#[derive(Debug)]
pub enum CliError {
    /// Bad inputs or configuration (exit 2).
    Input(Error),
    /// Failure while running (exit 3).
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn inner(&self) -> &Error {
        match self {
            CliError::Input(e) | CliError::Runtime(e) => e,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.inner())
    }
}

pub type CliResult = std::result::Result<(), CliError>;

fn input<T>(r: Result<T>) -> std::result::Result<T, CliError> {
    r.map_err(CliError::Input)
}

fn runtime<T>(r: Result<T>) -> std::result::Result<T, CliError> {
    r.map_err(CliError::Runtime)
}

pub fn parse_method(
    method: &str,
    iterations: usize,
    seed: u64,
) -> Result<ImputationMethod> {
    match method {
        "mean" => Ok(ImputationMethod::Mean),
        "median" => Ok(ImputationMethod::Median),
        "regression" => Ok(ImputationMethod::Regression { iterations, seed }),
        other => Err(Error::Config(format!(
            "method must be mean, median, or regression, got {other:?}"
        ))),
    }
}

pub fn parse_fit_scope(scope: &str) -> Result<FitScope> {
    match scope {
        "all" => Ok(FitScope::All),
        "complete-only" | "complete_only" => Ok(FitScope::CompleteOnly),
        other => Err(Error::Config(format!(
            "fit scope must be all or complete-only, got {other:?}"
        ))),
    }
}

/// `impute`: fill missing white/red clover labels and write the result.
pub fn cmd_impute(
    labels: &Path,
    method: &str,
    iterations: usize,
    seed: u64,
    fit_scope: &str,
    out: &Path,
) -> CliResult {
    let method = input(parse_method(method, iterations, seed))?;
    let scope = input(parse_fit_scope(fit_scope))?;
    let samples = input(data::load_labels_csv(labels))?;
    let imputed = match method {
        ImputationMethod::Mean => {
            let fr = input(impute::mean_fractions(&samples))?;
            println!("mean fractions: white={} red={}", fr.white_frac, fr.red_frac);
            input(impute::impute_mean(&samples))?
        }
        ImputationMethod::Median => {
            let fr = input(impute::median_fractions(&samples))?;
            println!(
                "median fractions (renormalized): white={} red={}",
                fr.white_frac, fr.red_frac
            );
            input(impute::impute_median(&samples))?
        }
        ImputationMethod::Regression { iterations, seed } => {
            let (imputed, fit) =
                input(impute::impute_regression(&samples, iterations, seed, scope))?;
            println!("regression coefficients after {} iterations:", fit.iterations);
            for (name, c) in &fit.coefficients {
                println!("  {name:<12} {c}");
            }
            imputed
        }
    };
    input(data::write_labels_csv(out, &imputed))?;
    println!("wrote {} rows to {}", imputed.len(), out.display());
    Ok(())
}

/// `split`: produce and persist the train/validation manifest.
pub fn cmd_split(labels: &Path, val_count: usize, seed: u64, out: &Path) -> CliResult {
    let samples = input(data::load_labels_csv(labels))?;
    let manifest = input(data::split_dataset(&samples, val_count, seed))?;
    input(manifest.save(out))?;
    println!(
        "split {} samples into {} train / {} val (seed {seed}) -> {}",
        samples.len(),
        manifest.train_ids.len(),
        manifest.val_ids.len(),
        out.display()
    );
    Ok(())
}

/// `train`: impute if needed, split, train, and write the artifacts.
pub fn cmd_train(config_path: &Path, out_dir_flag: Option<&Path>) -> CliResult {
    // input phase: configuration and top-level paths
    let cfg = input(RunConfig::parse_file(config_path))?;
    input(cfg.validate_paths())?;
    input(cfg.train.validate())?;
    let labels_csv = input(cfg.labels_csv.clone().ok_or_else(|| {
        Error::Config("config is missing labels_csv".to_string())
    }))?;
    let image_dir = input(cfg.image_dir.clone().ok_or_else(|| {
        Error::Config("config is missing image_dir".to_string())
    }))?;
    let out_dir = input(
        out_dir_flag
            .map(Path::to_path_buf)
            .or_else(|| cfg.out_dir.clone())
            .ok_or_else(|| {
                Error::Config("set out_dir in the config or pass --out-dir".to_string())
            }),
    )?;
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Input(Error::io(&out_dir, e)))?;

    // runtime phase
    let samples = runtime(data::load_dataset(&labels_csv, &image_dir))?;
    let samples = if samples.iter().all(|s| s.labels.is_complete()) {
        samples
    } else {
        runtime(impute::impute(
            &samples,
            cfg.train.imputation,
            cfg.train.fit_scope,
        ))?
    };
    runtime(data::write_labels_csv(
        &out_dir.join("labels_imputed.csv"),
        &samples,
    ))?;

    let split = runtime(data::split_dataset(
        &samples,
        cfg.val_count,
        cfg.train.seed,
    ))?;
    runtime(split.save(&out_dir.join("split.txt")))?;

    let outcome = runtime(pipeline::train(&samples, &split, &cfg.train))?;
    let ckpt_path = out_dir.join("checkpoint_best.biom");
    runtime(outcome.best.save(&ckpt_path))?;
    runtime(pipeline::write_history_csv(
        &out_dir.join("history.csv"),
        &outcome.history,
    ))?;
    println!(
        "best epoch {} with validation loss {} -> {}",
        outcome.best_epoch,
        outcome.best.val_loss,
        ckpt_path.display()
    );
    Ok(())
}

fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            out.push((id, path));
        }
    }
    out.sort();
    Ok(out)
}

/// `predict`: run a checkpoint over an image directory.
pub fn cmd_predict(checkpoint: &Path, images: &Path, out: &Path) -> CliResult {
    let ck = input(Checkpoint::load(checkpoint))?;
    let mut model = input(Model::from_checkpoint(&ck))?;
    let inputs = input(list_images(images))?;
    let preds = input(model.predict_paths(&inputs))?;
    input(pipeline::write_predictions_csv(out, &preds))?;
    println!("wrote {} predictions to {}", preds.len(), out.display());
    Ok(())
}

pub fn parse_overall_mode(mode: &str) -> Result<OverallMode> {
    match mode {
        "pooled" => Ok(OverallMode::Pooled),
        "per-component" | "per_component" => Ok(OverallMode::PerComponentMean),
        other => Err(Error::Config(format!(
            "overall mode must be pooled or per-component, got {other:?}"
        ))),
    }
}

/// `evaluate`: per-component RMSE/MAE of a prediction CSV against truth.
pub fn cmd_evaluate(
    predictions: &Path,
    truth: &Path,
    overall: &str,
    out: Option<&Path>,
) -> CliResult {
    let mode = input(parse_overall_mode(overall))?;
    let preds = input(pipeline::read_predictions_csv(predictions))?;
    let truth = input(data::load_labels_csv(truth))?;
    let report = input(pipeline::evaluate(&preds, &truth, mode))?;
    print!("{}", report.render_table());
    if let Some(path) = out {
        input(std::fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e)))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// `augment-preview`: write `n` augmented variants of one image as PNGs.
pub fn cmd_augment_preview(
    image: &Path,
    config: Option<&Path>,
    n: usize,
    out_dir: &Path,
) -> CliResult {
    let (aug, seed) = match config {
        Some(path) => {
            let cfg = input(RunConfig::parse_file(path))?;
            (cfg.train.augment, cfg.train.seed)
        }
        None => (AugmentConfig::default(), 0),
    };
    input(aug.validate())?;
    let source = input(Image::load(image))?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Input(Error::io(out_dir, e)))?;
    let stem = image
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image");
    for i in 0..n {
        let mut rng = rng_from_seed(crate::augment::item_seed(seed, 0, stem, i));
        let draw = augment::draw_params(&aug, &mut rng);
        let out = input(augment::apply_affine(&source, &draw, aug.out_size))?;
        let path = out_dir.join(format!("{stem}_aug{i:02}.png"));
        input(out.save_png(&path))?;
    }
    println!("wrote {n} previews to {}", out_dir.display());
    Ok(())
}
