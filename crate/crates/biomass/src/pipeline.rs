//! Training orchestration, prediction, and per-component evaluation.
//!
//! Training consumes the augmented stream for the manifest's train ids,
//! pushes batches through the frozen extractor into the trainable head, and
//! optimizes the sample-weighted RMSE with Adam. After every epoch the
//! unaugmented (deterministically resized) validation images are scored in
//! inference mode; the checkpoint with the least validation loss is kept.
//! Everything is deterministic for a fixed seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::augment::{self, AugmentConfig, AugmentItem, SampleWeights};
use crate::checkpoint::{Checkpoint, TensorEntry};
use crate::data::{Sample, SplitManifest};
use crate::error::{Error, Result};
use crate::img::Image;
use crate::impute::{FitScope, ImputationMethod};
use crate::nn::{
    weighted_rmse_with_grad, Adam, DecayMode, Extractor, ExtractorConfig, Head, Mode,
    WeightsSource,
};
use crate::rng::{derive_seed, derive_seed_n, rng_from_seed, SeedHasher};
use crate::tensor::{Scalar, Tensor};

/// Full training configuration.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub decay: f64,
    pub decay_mode: DecayMode,
    pub weight_basic: f64,
    pub weight_advanced: f64,
    pub seed: u64,
    pub imputation: ImputationMethod,
    pub fit_scope: FitScope,
    pub augment: AugmentConfig,
    pub head_dims: Vec<usize>,
    pub extractor: ExtractorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            lr0: 1e-3,
            decay: 5e-6,
            decay_mode: DecayMode::LrDecay,
            weight_basic: 1.0,
            weight_advanced: 1.5,
            seed: 0,
            imputation: ImputationMethod::Mean,
            fit_scope: FitScope::All,
            augment: AugmentConfig::default(),
            head_dims: vec![4096, 256, 4],
            extractor: ExtractorConfig {
                block_channels: vec![8, 16],
                source: WeightsSource::RandomSeed(0),
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("train.epochs must be >= 1".to_string()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(
                "train.batch_size must be >= 2 (batch normalization)".to_string(),
            ));
        }
        if self.weight_basic <= 0.0 || self.weight_advanced <= 0.0 {
            return Err(Error::Config("sample weights must be > 0".to_string()));
        }
        if !(self.lr0 > 0.0) || self.decay < 0.0 {
            return Err(Error::Config("lr0 must be > 0 and decay >= 0".to_string()));
        }
        if self.head_dims.last() != Some(&4) {
            return Err(Error::Config(format!(
                "head.dims must end in 4 output neurons, got {:?}",
                self.head_dims
            )));
        }
        self.augment.validate()?;
        self.extractor.validate()?;
        self.sample_weights().validate()
    }

    pub fn sample_weights(&self) -> SampleWeights {
        SampleWeights {
            basic: self.weight_basic,
            advanced: self.weight_advanced,
        }
    }

    /// Stable hash of every field, recorded in checkpoints for provenance.
    pub fn canonical_hash(&self) -> u64 {
        let mut text = String::new();
        let _ = write!(
            text,
            "epochs={};batch={};lr0={};decay={};mode={:?};wb={};wa={};seed={};imp={:?};scope={:?};dims={:?};ex={:?};",
            self.epochs,
            self.batch_size,
            self.lr0,
            self.decay,
            self.decay_mode,
            self.weight_basic,
            self.weight_advanced,
            self.seed,
            self.imputation,
            self.fit_scope,
            self.head_dims,
            self.extractor
        );
        let _ = write!(
            text,
            "aug={},{},{},{},{},{},{},{}",
            self.augment.rotation_deg,
            self.augment.zoom_frac,
            self.augment.shift_frac,
            self.augment.shear_deg,
            self.augment.hflip,
            self.augment.channel_shift,
            self.augment.out_size,
            self.augment.variants_per_image
        );
        let mut h = SeedHasher::new(0);
        h.write_str(&text);
        h.finish()
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// Everything `train` returns.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub best_epoch: u32,
    pub history: Vec<EpochStats>,
}

/// Batch index ranges: full `batch_size` chunks, keeping the partial final
/// batch. A final remainder of one item is folded into the preceding batch so
/// train-mode batch normalization always sees at least two rows.
pub fn batch_plan(n_items: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n_items {
        let end = (start + batch_size).min(n_items);
        out.push(start..end);
        start = end;
    }
    if out.len() >= 2 && out.last().map(|r| r.len()) == Some(1) {
        let last = out.pop().unwrap();
        let prev = out.pop().unwrap();
        out.push(prev.start..last.end);
    }
    out
}

/// Planar CHW float image in `[0, 1]`.
fn image_to_chw(img: &Image) -> Vec<f32> {
    let (w, h) = (img.width, img.height);
    let mut out = vec![0.0f32; 3 * w * h];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                out[(c * h + y) * w + x] = img.get(x, y, c) / 255.0;
            }
        }
    }
    out
}

fn items_to_batch(items: &[AugmentItem], out_size: usize) -> Result<(Tensor<f32>, Tensor<f32>, Tensor<f32>)> {
    let b = items.len();
    let mut x = Vec::with_capacity(b * 3 * out_size * out_size);
    let mut t = Vec::with_capacity(b * 4);
    let mut w = Vec::with_capacity(b);
    for item in items {
        x.extend(image_to_chw(&item.image));
        let targets = item.labels.target_fractions().ok_or_else(|| {
            Error::Training("incomplete labels reached the training batch".to_string())
        })?;
        t.extend(targets.iter().map(|&v| v as f32));
        w.push(item.weight as f32);
    }
    Ok((
        Tensor::from_vec(&[b, 3, out_size, out_size], x)?,
        Tensor::from_vec(&[b, 4], t)?,
        Tensor::from_vec(&[b], w)?,
    ))
}

fn build_extractor(config: &ExtractorConfig) -> Result<Extractor<f32>> {
    config.validate()?;
    match &config.source {
        WeightsSource::RandomSeed(seed) => {
            Extractor::new_random(&config.block_channels, *seed)
        }
        WeightsSource::File(path) => {
            let entries = crate::checkpoint::load_tensors(path)?;
            let named: Vec<(String, Tensor<f32>)> = entries
                .iter()
                .map(|e| Ok((e.name.clone(), e.to_tensor()?)))
                .collect::<Result<_>>()?;
            let ex = Extractor::from_named_tensors("", &named)?;
            if !config.block_channels.is_empty()
                && ex.block_channels() != config.block_channels
            {
                return Err(Error::Checkpoint(format!(
                    "extractor file {} has blocks {:?}, config expects {:?}",
                    path.display(),
                    ex.block_channels(),
                    config.block_channels
                )));
            }
            Ok(ex)
        }
    }
}

fn snapshot_checkpoint(
    head: &Head<f32>,
    extractor: &Extractor<f32>,
    epoch: u32,
    val_loss: f32,
    config: &TrainConfig,
) -> Checkpoint {
    let mut tensors = Vec::new();
    for (name, t) in head.named_tensors() {
        tensors.push(TensorEntry::from_tensor(format!("head/{name}"), t));
    }
    for (name, t) in extractor.named_tensors() {
        tensors.push(TensorEntry::from_tensor(format!("extractor/{name}"), t));
    }
    Checkpoint {
        epoch,
        val_loss,
        config_hash: config.canonical_hash(),
        out_size: config.augment.out_size as u32,
        tensors,
    }
}

struct ValSet {
    images: Vec<Vec<f32>>, // CHW per sample
    targets: Vec<[f32; 4]>,
    weights: Vec<f32>,
}

fn prepare_val_set(samples: &[Sample], out_size: usize, weights: SampleWeights) -> Result<ValSet> {
    let loaded: Vec<Result<(Vec<f32>, [f32; 4], f32)>> = samples
        .par_iter()
        .map(|s| {
            let img = Image::load(s.require_image_path()?)?;
            let resized = augment::resize_to(&img, out_size);
            let t = s.labels.target_fractions().ok_or_else(|| Error::InvalidLabel {
                image_id: s.image_id.clone(),
                constraint: "incomplete labels (run imputation first)".to_string(),
            })?;
            Ok((
                image_to_chw(&resized),
                [t[0] as f32, t[1] as f32, t[2] as f32, t[3] as f32],
                weights.for_sample(s) as f32,
            ))
        })
        .collect();
    let mut out = ValSet {
        images: Vec::new(),
        targets: Vec::new(),
        weights: Vec::new(),
    };
    for item in loaded {
        let (img, t, w) = item?;
        out.images.push(img);
        out.targets.push(t);
        out.weights.push(w);
    }
    Ok(out)
}

/// Weighted RMSE over the whole validation set, evaluated in inference mode.
fn validation_loss(
    extractor: &mut Extractor<f32>,
    head: &mut Head<f32>,
    val: &ValSet,
    out_size: usize,
    batch_size: usize,
) -> Result<f64> {
    let mut acc = 0.0f64;
    let mut wsum = 0.0f64;
    for range in batch_plan(val.images.len(), batch_size) {
        let b = range.len();
        let mut x = Vec::with_capacity(b * 3 * out_size * out_size);
        for i in range.clone() {
            x.extend_from_slice(&val.images[i]);
        }
        let x = Tensor::from_vec(&[b, 3, out_size, out_size], x)?;
        let features = extractor.forward(&x, false)?;
        let probs = head.forward(&features, Mode::Inference, false)?;
        for (row, i) in probs.data().chunks(4).zip(range) {
            let mut sq = 0.0f64;
            for (p, t) in row.iter().zip(val.targets[i]) {
                let d = f64::from(p - t);
                sq += d * d;
            }
            let w = f64::from(val.weights[i]);
            acc += w * sq / 4.0;
            wsum += w;
        }
    }
    Ok((acc / wsum).sqrt())
}

/// Train the head on the manifest's train ids and keep the checkpoint with
/// the least validation loss.
pub fn train(samples: &[Sample], split: &SplitManifest, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    split.validate_against(samples)?;
    for s in samples {
        if !s.labels.is_complete() {
            return Err(Error::InvalidLabel {
                image_id: s.image_id.clone(),
                constraint: "incomplete labels (run imputation first)".to_string(),
            });
        }
        s.require_image_path()?;
    }
    let by_id: BTreeMap<&str, &Sample> = samples.iter().map(|s| (s.image_id.as_str(), s)).collect();
    let pick = |ids: &[String]| -> Vec<Sample> {
        ids.iter().map(|id| (*by_id.get(id.as_str()).unwrap()).clone()).collect()
    };
    let train_samples = pick(&split.train_ids);
    let val_samples = pick(&split.val_ids);
    if train_samples.len() < 2 {
        return Err(Error::Config("need at least 2 training samples".to_string()));
    }

    let out_size = config.augment.out_size;
    let weights = config.sample_weights();
    let mut extractor = build_extractor(&config.extractor)?;
    let features = extractor.feature_len(out_size, out_size)?;
    let mut head = Head::<f32>::new(
        features,
        &config.head_dims,
        &mut rng_from_seed(derive_seed(config.seed, "head-init")),
    )?;
    let mut adam = Adam::<f32>::new(config.lr0, config.decay, config.decay_mode, head.num_slots());

    let val = prepare_val_set(&val_samples, out_size, weights)?;
    let augment_seed = derive_seed(config.seed, "augment");

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(Checkpoint, u32)> = None;

    let variants = config.augment.variants_per_image;
    let mut keys: Vec<(usize, usize)> = Vec::with_capacity(train_samples.len() * variants);
    for epoch in 1..=config.epochs as u32 {
        keys.clear();
        for si in 0..train_samples.len() {
            for v in 0..variants {
                keys.push((si, v));
            }
        }
        {
            use rand::seq::SliceRandom;
            let mut rng =
                rng_from_seed(derive_seed_n(config.seed, "epoch-shuffle", u64::from(epoch)));
            keys.shuffle(&mut rng);
        }

        let mut acc = 0.0f64;
        let mut wsum = 0.0f64;
        for range in batch_plan(keys.len(), config.batch_size) {
            let batch_keys = &keys[range];
            let items: Vec<Result<AugmentItem>> = batch_keys
                .par_iter()
                .map(|&(si, v)| {
                    augment::generate_item(
                        &train_samples[si],
                        &config.augment,
                        epoch as usize,
                        augment_seed,
                        v,
                        weights,
                    )
                })
                .collect();
            let items: Vec<AugmentItem> = items.into_iter().collect::<Result<_>>()?;
            let (x, targets, w) = items_to_batch(&items, out_size)?;
            let feats = extractor.forward(&x, false)?;
            let probs = head.forward(&feats, Mode::Train, true)?;
            let (loss, grad) = weighted_rmse_with_grad(&probs, &targets, &w)?;
            head.backward(&grad)?;
            head.apply_adam(&mut adam)?;

            let batch_w: f64 = w.data().iter().map(|&v| f64::from(v)).sum();
            acc += f64::from(loss * loss) * batch_w;
            wsum += batch_w;
        }
        let train_loss = (acc / wsum).sqrt();
        let val_loss = validation_loss(&mut extractor, &mut head, &val, out_size, config.batch_size)?;
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr: adam.current_lr().as_f64(),
        });
        let improved = best
            .as_ref()
            .map(|(ck, _)| (val_loss as f32) < ck.val_loss)
            .unwrap_or(true);
        if improved {
            best = Some((
                snapshot_checkpoint(&head, &extractor, epoch, val_loss as f32, config),
                epoch,
            ));
        }
    }

    let (best, best_epoch) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
    })
}

/// A model reassembled from a checkpoint, ready for inference.
pub struct Model {
    pub extractor: Extractor<f32>,
    pub head: Head<f32>,
    pub out_size: usize,
}

impl Model {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Model> {
        let head_tensors = ck.tensors_under::<f32>("head/")?;
        let head = Head::from_named_tensors("", &head_tensors)?;
        let ex_tensors = ck.tensors_under::<f32>("extractor/")?;
        let extractor = Extractor::from_named_tensors("", &ex_tensors)?;
        if ck.out_size == 0 {
            return Err(Error::Checkpoint("checkpoint has zero input size".to_string()));
        }
        Ok(Model {
            extractor,
            head,
            out_size: ck.out_size as usize,
        })
    }

    /// Inference on already-prepared CHW rows.
    fn predict_chw(&mut self, rows: &[Vec<f32>]) -> Result<Vec<[f64; 4]>> {
        let mut out = Vec::with_capacity(rows.len());
        for range in batch_plan(rows.len(), 8) {
            let b = range.len();
            let mut x = Vec::with_capacity(b * 3 * self.out_size * self.out_size);
            for i in range {
                x.extend_from_slice(&rows[i]);
            }
            let x = Tensor::from_vec(&[b, 3, self.out_size, self.out_size], x)?;
            let feats = self.extractor.forward(&x, false)?;
            let probs = self.head.forward(&feats, Mode::Inference, false)?;
            for row in probs.data().chunks(4) {
                out.push([
                    f64::from(row[0]),
                    f64::from(row[1]),
                    f64::from(row[2]),
                    f64::from(row[3]),
                ]);
            }
        }
        Ok(out)
    }

    /// Predict biomass percentages for images on disk. Images are resized
    /// deterministically; no augmentation is applied.
    pub fn predict_paths(&mut self, inputs: &[(String, PathBuf)]) -> Result<Vec<Prediction>> {
        let rows: Vec<Result<Vec<f32>>> = inputs
            .par_iter()
            .map(|(_, path)| {
                let img = Image::load(path)?;
                Ok(image_to_chw(&augment::resize_to(&img, self.out_size)))
            })
            .collect();
        let rows: Vec<Vec<f32>> = rows.into_iter().collect::<Result<_>>()?;
        let probs = self.predict_chw(&rows)?;
        Ok(inputs
            .iter()
            .zip(probs)
            .map(|((id, _), p)| Prediction {
                image_id: id.clone(),
                grass_pct: p[0] * 100.0,
                white_pct: p[1] * 100.0,
                red_pct: p[2] * 100.0,
                weeds_pct: p[3] * 100.0,
            })
            .collect())
    }
}

/// Predicted biomass percentages for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub image_id: String,
    pub grass_pct: f64,
    pub white_pct: f64,
    pub red_pct: f64,
    pub weeds_pct: f64,
}

impl Prediction {
    pub fn clover_pct(&self) -> f64 {
        self.white_pct + self.red_pct
    }
}

/// How the overall row aggregates the five components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverallMode {
    /// One pool of all five components' errors.
    #[default]
    Pooled,
    /// Mean of the five per-component metrics.
    PerComponentMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentMetrics {
    pub rmse: f64,
    pub mae: f64,
}

fn metrics_of(errors: &[f64]) -> ComponentMetrics {
    let n = errors.len() as f64;
    let mse: f64 = errors.iter().map(|e| e * e).sum::<f64>() / n;
    let mae: f64 = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    ComponentMetrics {
        rmse: mse.sqrt(),
        mae,
    }
}

pub const COMPONENT_NAMES: [&str; 5] = ["grass", "clover", "white_clover", "red_clover", "weeds"];

/// Per-component and overall RMSE/MAE, in percentage points.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub components: Vec<(String, ComponentMetrics)>,
    pub overall: ComponentMetrics,
    pub overall_mode: OverallMode,
}

impl MetricsReport {
    pub fn render_table(&self) -> String {
        let mode = match self.overall_mode {
            OverallMode::Pooled => "pooled over all component errors",
            OverallMode::PerComponentMean => "mean of per-component metrics",
        };
        let mut out = String::new();
        let _ = writeln!(out, "component       rmse      mae");
        for (name, m) in &self.components {
            let _ = writeln!(out, "{name:<14}{:>7.4}{:>9.4}", m.rmse, m.mae);
        }
        let _ = writeln!(
            out,
            "{:<14}{:>7.4}{:>9.4}",
            "overall", self.overall.rmse, self.overall.mae
        );
        let _ = writeln!(out, "(overall = {mode})");
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,rmse,mae\n");
        for (name, m) in &self.components {
            let _ = writeln!(out, "{name},{},{}", m.rmse, m.mae);
        }
        let _ = writeln!(out, "overall,{},{}", self.overall.rmse, self.overall.mae);
        out
    }
}

/// Compare predictions against complete ground truth, aligned by image id.
pub fn evaluate(
    predictions: &[Prediction],
    truth: &[Sample],
    overall_mode: OverallMode,
) -> Result<MetricsReport> {
    let truth_by_id: BTreeMap<&str, &Sample> =
        truth.iter().map(|s| (s.image_id.as_str(), s)).collect();
    if truth_by_id.len() != truth.len() {
        return Err(Error::Evaluation("duplicate ids in truth".to_string()));
    }
    if predictions.is_empty() {
        return Err(Error::Evaluation("no predictions to evaluate".to_string()));
    }
    if predictions.len() != truth.len() {
        return Err(Error::Evaluation(format!(
            "id mismatch: {} predictions vs {} truth rows",
            predictions.len(),
            truth.len()
        )));
    }
    let mut errors: [Vec<f64>; 5] = Default::default();
    for p in predictions {
        let t = truth_by_id.get(p.image_id.as_str()).ok_or_else(|| {
            Error::Evaluation(format!("prediction id {} not present in truth", p.image_id))
        })?;
        let (tw, tr) = match (t.labels.white_pct, t.labels.red_pct) {
            (Some(w), Some(r)) => (w, r),
            _ => {
                return Err(Error::Evaluation(format!(
                    "truth for {} is missing the white/red breakdown",
                    t.image_id
                )))
            }
        };
        errors[0].push(p.grass_pct - t.labels.grass_pct);
        errors[1].push(p.clover_pct() - (tw + tr));
        errors[2].push(p.white_pct - tw);
        errors[3].push(p.red_pct - tr);
        errors[4].push(p.weeds_pct - t.labels.weeds_pct);
    }
    let components: Vec<(String, ComponentMetrics)> = COMPONENT_NAMES
        .iter()
        .zip(&errors)
        .map(|(name, errs)| (name.to_string(), metrics_of(errs)))
        .collect();
    let overall = match overall_mode {
        OverallMode::Pooled => {
            let pool: Vec<f64> = errors.iter().flatten().copied().collect();
            metrics_of(&pool)
        }
        OverallMode::PerComponentMean => {
            let n = components.len() as f64;
            ComponentMetrics {
                rmse: components.iter().map(|(_, m)| m.rmse).sum::<f64>() / n,
                mae: components.iter().map(|(_, m)| m.mae).sum::<f64>() / n,
            }
        }
    };
    Ok(MetricsReport {
        components,
        overall,
        overall_mode,
    })
}

fn fmt_float(v: f64) -> String {
    format!("{v}")
}

/// `epoch,train_loss,val_loss,lr` per line.
pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss,lr\n");
    for e in history {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e.epoch,
            fmt_float(e.train_loss),
            fmt_float(e.val_loss),
            fmt_float(e.lr)
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Challenge-submission shape: clover is the white + red sum.
pub fn write_predictions_csv(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let mut out =
        String::from("image_id,grass_pct,clover_pct,white_clover_pct,red_clover_pct,weeds_pct\n");
    for p in predictions {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.image_id,
            fmt_float(p.grass_pct),
            fmt_float(p.clover_pct()),
            fmt_float(p.white_pct),
            fmt_float(p.red_pct),
            fmt_float(p.weeds_pct)
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<Prediction>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            msg: e.to_string(),
        })?;
        if record.len() != 6 {
            return Err(Error::MalformedRow {
                row,
                msg: format!("expected 6 columns, got {}", record.len()),
            });
        }
        let num = |idx: usize, name: &str| -> Result<f64> {
            record[idx].parse().map_err(|_| Error::MalformedRow {
                row,
                msg: format!("cannot parse {name} from {:?}", &record[idx]),
            })
        };
        out.push(Prediction {
            image_id: record[0].to_string(),
            grass_pct: num(1, "grass_pct")?,
            white_pct: num(3, "white_clover_pct")?,
            red_pct: num(4, "red_clover_pct")?,
            weeds_pct: num(5, "weeds_pct")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_dataset, Category, LabelVector};

    #[test]
    fn batch_plan_keeps_partial_final_batch() {
        // 209 train images x 10 variants = 2090 items, batch 8:
        // 262 optimizer steps, final batch of 2
        let plan = batch_plan(2090, 8);
        assert_eq!(plan.len(), 262);
        assert_eq!(plan.last().unwrap().len(), 2);
        assert!(plan[..261].iter().all(|r| r.len() == 8));

        // a remainder of one merges into the previous batch
        let plan = batch_plan(17, 8);
        assert_eq!(plan.len(), 2);
        assert_eq!(plan[1].len(), 9);

        let plan = batch_plan(5, 8);
        assert_eq!(plan.len(), 1);
        assert_eq!(plan[0].len(), 5);
    }

    fn synthetic_dataset(dir: &Path, n: usize, image_size: usize) -> Vec<Sample> {
        let mut rng = rng_from_seed(1234);
        (0..n)
            .map(|i| {
                let mut img = Image::new(image_size, image_size);
                for v in img.pixels.iter_mut() {
                    use rand::Rng;
                    *v = rng.gen_range(0.0f32..=255.0).round();
                }
                let path = dir.join(format!("syn{i:03}.png"));
                img.save_png(&path).unwrap();
                let grass = 20.0 + (i % 13) as f64 * 4.0;
                let clover = 90.0 - grass - (i % 7) as f64 * 5.0;
                let weeds = 100.0 - grass - clover;
                let white = clover * (0.2 + 0.1 * (i % 5) as f64);
                Sample {
                    image_id: format!("syn{i:03}"),
                    harvest_season: (i % 4 + 1) as u8,
                    category: if i % 3 == 0 {
                        Category::Basic
                    } else {
                        Category::Advanced
                    },
                    labels: LabelVector {
                        grass_pct: grass,
                        clover_pct: clover,
                        white_pct: Some(white),
                        red_pct: Some(clover - white),
                        weeds_pct: weeds,
                    },
                    image_path: Some(path),
                }
            })
            .collect()
    }

    fn toy_config(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed,
            augment: AugmentConfig {
                out_size: 16,
                variants_per_image: 2,
                ..AugmentConfig::default()
            },
            head_dims: vec![8, 4],
            extractor: ExtractorConfig {
                block_channels: vec![4],
                source: WeightsSource::RandomSeed(7),
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn toy_training_runs_and_tracks_best() {
        let dir = tempfile::tempdir().unwrap();
        let samples = synthetic_dataset(dir.path(), 10, 20);
        let split = split_dataset(&samples, 3, 5).unwrap();
        let outcome = train(&samples, &split, &toy_config(11)).unwrap();
        assert_eq!(outcome.history.len(), 2);
        let min_val = outcome
            .history
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(outcome.best.val_loss, min_val as f32);
        assert_eq!(
            outcome.best.epoch,
            outcome
                .history
                .iter()
                .min_by(|a, b| a.val_loss.partial_cmp(&b.val_loss).unwrap())
                .unwrap()
                .epoch
        );
    }

    #[test]
    fn single_epoch_checkpoint_is_epoch_one() {
        let dir = tempfile::tempdir().unwrap();
        let samples = synthetic_dataset(dir.path(), 8, 16);
        let split = split_dataset(&samples, 2, 5).unwrap();
        let mut config = toy_config(3);
        config.epochs = 1;
        let outcome = train(&samples, &split, &config).unwrap();
        assert_eq!(outcome.best.epoch, 1);
        assert_eq!(outcome.best_epoch, 1);
    }

    #[test]
    fn prediction_rows_sum_to_100_and_ignore_batch_order() {
        let dir = tempfile::tempdir().unwrap();
        let samples = synthetic_dataset(dir.path(), 9, 20);
        let split = split_dataset(&samples, 3, 5).unwrap();
        let outcome = train(&samples, &split, &toy_config(2)).unwrap();
        let mut model = Model::from_checkpoint(&outcome.best).unwrap();
        let mut inputs: Vec<(String, PathBuf)> = samples
            .iter()
            .map(|s| (s.image_id.clone(), s.image_path.clone().unwrap()))
            .collect();
        let preds = model.predict_paths(&inputs).unwrap();
        for p in &preds {
            let total = p.grass_pct + p.white_pct + p.red_pct + p.weeds_pct;
            assert!((total - 100.0).abs() < 1e-4, "{total}");
            assert!((p.clover_pct() - p.white_pct - p.red_pct).abs() < 1e-12);
        }
        inputs.reverse();
        let rev = model.predict_paths(&inputs).unwrap();
        for p in &preds {
            let q = rev.iter().find(|q| q.image_id == p.image_id).unwrap();
            assert_eq!(p, q);
        }
        // determinism on repeat
        inputs.reverse();
        let again = model.predict_paths(&inputs).unwrap();
        assert_eq!(preds, again);
    }

    fn truth_sample(id: &str, grass: f64, white: f64, red: f64, weeds: f64) -> Sample {
        Sample {
            image_id: id.to_string(),
            harvest_season: 1,
            category: Category::Advanced,
            labels: LabelVector {
                grass_pct: grass,
                clover_pct: white + red,
                white_pct: Some(white),
                red_pct: Some(red),
                weeds_pct: weeds,
            },
            image_path: None,
        }
    }

    #[test]
    fn evaluate_zero_error_and_constant_error() {
        let truth = vec![truth_sample("a", 50.0, 20.0, 10.0, 20.0)];
        let exact = vec![Prediction {
            image_id: "a".to_string(),
            grass_pct: 50.0,
            white_pct: 20.0,
            red_pct: 10.0,
            weeds_pct: 20.0,
        }];
        let report = evaluate(&exact, &truth, OverallMode::Pooled).unwrap();
        for (_, m) in &report.components {
            assert_eq!(m.rmse, 0.0);
            assert_eq!(m.mae, 0.0);
        }

        // constant +5 error: MAE = RMSE = 5
        let off = vec![Prediction {
            image_id: "a".to_string(),
            grass_pct: 55.0,
            white_pct: 25.0,
            red_pct: 15.0,
            weeds_pct: 25.0,
        }];
        let report = evaluate(&off, &truth, OverallMode::Pooled).unwrap();
        for (name, m) in &report.components {
            let want = if name == "clover" { 10.0 } else { 5.0 };
            assert!((m.rmse - want).abs() < 1e-12, "{name}");
            assert!((m.mae - want).abs() < 1e-12, "{name}");
        }
    }

    #[test]
    fn evaluate_hand_fixture_over_two_samples() {
        // grass errors +3 and -4: MAE 3.5, RMSE sqrt(12.5)
        let truth = vec![
            truth_sample("a", 50.0, 20.0, 10.0, 20.0),
            truth_sample("b", 40.0, 25.0, 15.0, 20.0),
        ];
        let preds = vec![
            Prediction {
                image_id: "a".to_string(),
                grass_pct: 53.0,
                white_pct: 20.0,
                red_pct: 10.0,
                weeds_pct: 20.0,
            },
            Prediction {
                image_id: "b".to_string(),
                grass_pct: 36.0,
                white_pct: 25.0,
                red_pct: 15.0,
                weeds_pct: 20.0,
            },
        ];
        let report = evaluate(&preds, &truth, OverallMode::Pooled).unwrap();
        let grass = &report.components[0].1;
        assert!((grass.mae - 3.5).abs() < 1e-12);
        assert!((grass.rmse - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((grass.rmse - 3.5355).abs() < 1e-4);
    }

    #[test]
    fn evaluate_rejects_id_mismatch_and_incomplete_truth() {
        let truth = vec![truth_sample("a", 50.0, 20.0, 10.0, 20.0)];
        let preds = vec![Prediction {
            image_id: "zzz".to_string(),
            grass_pct: 50.0,
            white_pct: 20.0,
            red_pct: 10.0,
            weeds_pct: 20.0,
        }];
        assert!(evaluate(&preds, &truth, OverallMode::Pooled).is_err());

        let mut incomplete = truth.clone();
        incomplete[0].labels.white_pct = None;
        incomplete[0].labels.red_pct = None;
        let ok_pred = vec![Prediction {
            image_id: "a".to_string(),
            grass_pct: 50.0,
            white_pct: 20.0,
            red_pct: 10.0,
            weeds_pct: 20.0,
        }];
        assert!(evaluate(&ok_pred, &incomplete, OverallMode::Pooled).is_err());
    }

    #[test]
    fn rmse_never_below_mae_on_random_fixtures() {
        use rand::Rng;
        let mut rng = rng_from_seed(17);
        for _ in 0..50 {
            let n = rng.gen_range(2..20);
            let truth: Vec<Sample> = (0..n)
                .map(|i| {
                    let grass = rng.gen_range(10.0..60.0);
                    let white = rng.gen_range(5.0..20.0);
                    let red = rng.gen_range(5.0..20.0);
                    let weeds = 100.0 - grass - white - red;
                    truth_sample(&format!("s{i}"), grass, white, red, weeds)
                })
                .collect();
            let preds: Vec<Prediction> = truth
                .iter()
                .map(|t| Prediction {
                    image_id: t.image_id.clone(),
                    grass_pct: t.labels.grass_pct + rng.gen_range(-8.0..8.0),
                    white_pct: t.labels.white_pct.unwrap() + rng.gen_range(-8.0..8.0),
                    red_pct: t.labels.red_pct.unwrap() + rng.gen_range(-8.0..8.0),
                    weeds_pct: t.labels.weeds_pct + rng.gen_range(-8.0..8.0),
                })
                .collect();
            let report = evaluate(&preds, &truth, OverallMode::Pooled).unwrap();
            for (name, m) in &report.components {
                assert!(m.rmse >= m.mae - 1e-12, "{name}: {} < {}", m.rmse, m.mae);
            }
            assert!(report.overall.rmse >= report.overall.mae - 1e-12);

            // independent naive recomputation of the grass component
            let grass_errs: Vec<f64> = preds
                .iter()
                .map(|p| {
                    let t = truth.iter().find(|t| t.image_id == p.image_id).unwrap();
                    p.grass_pct - t.labels.grass_pct
                })
                .collect();
            let naive_mae =
                grass_errs.iter().map(|e| e.abs()).sum::<f64>() / grass_errs.len() as f64;
            let naive_rmse = (grass_errs.iter().map(|e| e * e).sum::<f64>()
                / grass_errs.len() as f64)
                .sqrt();
            let grass = &report.components[0].1;
            assert!((grass.mae - naive_mae).abs() < 1e-9);
            assert!((grass.rmse - naive_rmse).abs() < 1e-9);
        }
    }

    #[test]
    fn predictions_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.csv");
        let preds = vec![
            Prediction {
                image_id: "a".to_string(),
                grass_pct: 51.25,
                white_pct: 18.5,
                red_pct: 11.5,
                weeds_pct: 18.75,
            },
            Prediction {
                image_id: "b".to_string(),
                grass_pct: 40.0,
                white_pct: 20.0,
                red_pct: 20.0,
                weeds_pct: 20.0,
            },
        ];
        write_predictions_csv(&path, &preds).unwrap();
        let back = read_predictions_csv(&path).unwrap();
        assert_eq!(back, preds);
    }
}
