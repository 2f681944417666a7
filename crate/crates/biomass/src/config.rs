//! Flat `key=value` run configuration.
//!
//! One key per line, `#` starts a comment line, unknown keys are rejected.
//! Every knob of a training run lives here so an experiment is reproducible
//! from one file plus its seed. Recognized keys:
//!
//! ```text
//! labels_csv, image_dir, out_dir, seed,
//! imputation.method, imputation.iterations, imputation.fit_scope,
//! split.val_count,
//! train.epochs, train.batch_size, train.lr0, train.decay, train.decay_mode,
//! train.weight_basic, train.weight_advanced,
//! augment.rotation_deg, augment.zoom_frac, augment.shift_frac,
//! augment.shear_deg, augment.hflip, augment.channel_shift,
//! augment.out_size, augment.variants,
//! extractor.source, head.dims
//! ```
//!
//! `extractor.source` is `file:<path>` or `random:<seed>[:c1,c2,...]`
//! (channel widths default to `8,16`). `head.dims` is a comma list of layer
//! widths ending in the 4 output neurons. All randomness derives from the
//! single `seed` key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::impute::{FitScope, ImputationMethod};
use crate::nn::{DecayMode, ExtractorConfig, WeightsSource};
use crate::pipeline::TrainConfig;
use crate::rng::derive_seed;

const KNOWN_KEYS: [&str; 25] = [
    "labels_csv",
    "image_dir",
    "out_dir",
    "seed",
    "imputation.method",
    "imputation.iterations",
    "imputation.fit_scope",
    "split.val_count",
    "train.epochs",
    "train.batch_size",
    "train.lr0",
    "train.decay",
    "train.decay_mode",
    "train.weight_basic",
    "train.weight_advanced",
    "augment.rotation_deg",
    "augment.zoom_frac",
    "augment.shift_frac",
    "augment.shear_deg",
    "augment.hflip",
    "augment.channel_shift",
    "augment.out_size",
    "augment.variants",
    "extractor.source",
    "head.dims",
];

/// A parsed run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub labels_csv: Option<PathBuf>,
    pub image_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub val_count: usize,
    pub train: TrainConfig,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("cannot parse {key} = {value:?} as bool"))),
    }
}

fn parse_dims(key: &str, value: &str) -> Result<Vec<usize>> {
    let dims: Result<Vec<usize>> = value
        .split(',')
        .map(|p| parse_value::<usize>(key, p.trim()))
        .collect();
    let dims = dims?;
    if dims.is_empty() {
        return Err(Error::Config(format!("{key} must list at least one width")));
    }
    Ok(dims)
}

fn parse_extractor_source(value: &str) -> Result<ExtractorConfig> {
    if let Some(path) = value.strip_prefix("file:") {
        if path.is_empty() {
            return Err(Error::Config("extractor.source file path is empty".to_string()));
        }
        return Ok(ExtractorConfig {
            block_channels: Vec::new(), // taken from the file
            source: WeightsSource::File(PathBuf::from(path)),
        });
    }
    if let Some(rest) = value.strip_prefix("random:") {
        let mut parts = rest.splitn(2, ':');
        let seed: u64 = parse_value("extractor.source seed", parts.next().unwrap_or(""))?;
        let channels = match parts.next() {
            Some(list) => parse_dims("extractor.source channels", list)?,
            None => vec![8, 16],
        };
        return Ok(ExtractorConfig {
            block_channels: channels,
            source: WeightsSource::RandomSeed(seed),
        });
    }
    Err(Error::Config(format!(
        "extractor.source must be file:<path> or random:<seed>[:c1,c2,...], got {value:?}"
    )))
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {} is not key=value: {line:?}", i + 1))
            })?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            }
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("duplicate config key {key:?}")));
            }
        }

        let get = |key: &str| map.get(key).map(String::as_str);
        let seed: u64 = match get("seed") {
            Some(v) => parse_value("seed", v)?,
            None => 0,
        };

        let mut augment = AugmentConfig::default();
        if let Some(v) = get("augment.rotation_deg") {
            augment.rotation_deg = parse_value("augment.rotation_deg", v)?;
        }
        if let Some(v) = get("augment.zoom_frac") {
            augment.zoom_frac = parse_value("augment.zoom_frac", v)?;
        }
        if let Some(v) = get("augment.shift_frac") {
            augment.shift_frac = parse_value("augment.shift_frac", v)?;
        }
        if let Some(v) = get("augment.shear_deg") {
            augment.shear_deg = parse_value("augment.shear_deg", v)?;
        }
        if let Some(v) = get("augment.hflip") {
            augment.hflip = parse_bool("augment.hflip", v)?;
        }
        if let Some(v) = get("augment.channel_shift") {
            augment.channel_shift = parse_value("augment.channel_shift", v)?;
        }
        if let Some(v) = get("augment.out_size") {
            augment.out_size = parse_value("augment.out_size", v)?;
        }
        if let Some(v) = get("augment.variants") {
            augment.variants_per_image = parse_value("augment.variants", v)?;
        }

        let iterations = match get("imputation.iterations") {
            Some(v) => parse_value("imputation.iterations", v)?,
            None => 5,
        };
        let imputation = match get("imputation.method").unwrap_or("mean") {
            "mean" => ImputationMethod::Mean,
            "median" => ImputationMethod::Median,
            "regression" => ImputationMethod::Regression {
                iterations,
                seed: derive_seed(seed, "impute"),
            },
            other => {
                return Err(Error::Config(format!(
                    "imputation.method must be mean, median, or regression, got {other:?}"
                )))
            }
        };
        let fit_scope = match get("imputation.fit_scope").unwrap_or("all") {
            "all" => FitScope::All,
            "complete_only" | "complete-only" => FitScope::CompleteOnly,
            other => {
                return Err(Error::Config(format!(
                    "imputation.fit_scope must be all or complete_only, got {other:?}"
                )))
            }
        };
        let decay_mode = match get("train.decay_mode").unwrap_or("lr_decay") {
            "lr_decay" | "lr-decay" => DecayMode::LrDecay,
            "l2" => DecayMode::L2,
            other => {
                return Err(Error::Config(format!(
                    "train.decay_mode must be lr_decay or l2, got {other:?}"
                )))
            }
        };
        let extractor = match get("extractor.source") {
            Some(v) => parse_extractor_source(v)?,
            None => ExtractorConfig {
                block_channels: vec![8, 16],
                source: WeightsSource::RandomSeed(seed),
            },
        };
        let head_dims = match get("head.dims") {
            Some(v) => parse_dims("head.dims", v)?,
            None => vec![4096, 256, 4],
        };

        let train = TrainConfig {
            epochs: match get("train.epochs") {
                Some(v) => parse_value("train.epochs", v)?,
                None => 100,
            },
            batch_size: match get("train.batch_size") {
                Some(v) => parse_value("train.batch_size", v)?,
                None => 8,
            },
            lr0: match get("train.lr0") {
                Some(v) => parse_value("train.lr0", v)?,
                None => 1e-3,
            },
            decay: match get("train.decay") {
                Some(v) => parse_value("train.decay", v)?,
                None => 5e-6,
            },
            decay_mode,
            weight_basic: match get("train.weight_basic") {
                Some(v) => parse_value("train.weight_basic", v)?,
                None => 1.0,
            },
            weight_advanced: match get("train.weight_advanced") {
                Some(v) => parse_value("train.weight_advanced", v)?,
                None => 1.5,
            },
            seed,
            imputation,
            fit_scope,
            augment,
            head_dims,
            extractor,
        };

        Ok(RunConfig {
            labels_csv: get("labels_csv").map(PathBuf::from),
            image_dir: get("image_dir").map(PathBuf::from),
            out_dir: get("out_dir").map(PathBuf::from),
            val_count: match get("split.val_count") {
                Some(v) => parse_value("split.val_count", v)?,
                None => 52,
            },
            train,
        })
    }

    pub fn parse_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Check that configured input paths exist before any work starts.
    pub fn validate_paths(&self) -> Result<()> {
        if let Some(p) = &self.labels_csv {
            if !p.is_file() {
                return Err(Error::Config(format!("labels_csv {} is not a file", p.display())));
            }
        }
        if let Some(p) = &self.image_dir {
            if !p.is_dir() {
                return Err(Error::Config(format!(
                    "image_dir {} is not a directory",
                    p.display()
                )));
            }
        }
        if let WeightsSource::File(p) = &self.train.extractor.source {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "extractor weight file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = "\
# paths
labels_csv = labels.csv
image_dir = images
out_dir = runs/a
seed = 42

imputation.method = regression
imputation.iterations = 7
split.val_count = 52

train.epochs = 100
train.batch_size = 8
train.lr0 = 0.001
train.decay = 0.000005
train.weight_basic = 1.0
train.weight_advanced = 1.5

augment.rotation_deg = 15
augment.zoom_frac = 0.15
augment.shift_frac = 0.2
augment.shear_deg = 15
augment.hflip = true
augment.channel_shift = 50
augment.out_size = 500
augment.variants = 10

extractor.source = random:3:4,8
head.dims = 64,32,4
";
        let cfg = RunConfig::parse_str(text).unwrap();
        assert_eq!(cfg.labels_csv.as_deref(), Some(Path::new("labels.csv")));
        assert_eq!(cfg.val_count, 52);
        assert_eq!(cfg.train.seed, 42);
        assert_eq!(cfg.train.head_dims, vec![64, 32, 4]);
        assert_eq!(cfg.train.extractor.block_channels, vec![4, 8]);
        assert!(matches!(
            cfg.train.imputation,
            ImputationMethod::Regression { iterations: 7, .. }
        ));
        cfg.train.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(RunConfig::parse_str("bogus_key = 1\n").is_err());
        assert!(RunConfig::parse_str("seed = 1\nseed = 2\n").is_err());
        assert!(RunConfig::parse_str("not a key value line\n").is_err());
    }

    #[test]
    fn defaults_match_training_recipe() {
        let cfg = RunConfig::parse_str("seed = 9\n").unwrap();
        assert_eq!(cfg.train.epochs, 100);
        assert_eq!(cfg.train.batch_size, 8);
        assert_eq!(cfg.train.lr0, 1e-3);
        assert_eq!(cfg.train.decay, 5e-6);
        assert_eq!(cfg.train.weight_basic, 1.0);
        assert_eq!(cfg.train.weight_advanced, 1.5);
        assert_eq!(cfg.train.augment, AugmentConfig::default());
        assert_eq!(cfg.train.head_dims, vec![4096, 256, 4]);
        assert_eq!(cfg.val_count, 52);
    }

    #[test]
    fn extractor_source_forms() {
        let cfg = RunConfig::parse_str("extractor.source = file:weights.biom\n").unwrap();
        assert!(matches!(
            cfg.train.extractor.source,
            WeightsSource::File(_)
        ));
        let cfg = RunConfig::parse_str("extractor.source = random:5\n").unwrap();
        assert_eq!(cfg.train.extractor.block_channels, vec![8, 16]);
        assert!(RunConfig::parse_str("extractor.source = nonsense\n").is_err());
    }
}
