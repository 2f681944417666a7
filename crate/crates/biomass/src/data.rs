//! Labels CSV ingest, validation, and the deterministic train/validation split.
//!
//! The labels file is UTF-8 CSV with a header row:
//!
//! ```text
//! image_id,harvest_season,category,grass_pct,clover_pct,white_clover_pct,red_clover_pct,weeds_pct
//! ```
//!
//! `category` is one of `basic`, `semi-advanced`, `advanced`; the two advanced
//! variants are grouped together at ingest. The white/red columns are empty
//! for basic rows until an imputation pass fills them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Measured percentages may carry lab rounding; sums are checked to this slack.
pub const SIMPLEX_TOLERANCE: f64 = 0.5;

const CSV_HEADER: [&str; 8] = [
    "image_id",
    "harvest_season",
    "category",
    "grass_pct",
    "clover_pct",
    "white_clover_pct",
    "red_clover_pct",
    "weeds_pct",
];

/// Hierarchical dry-biomass percentages for one sample.
///
/// `grass + clover + weeds` must account for the full dry biomass; when the
/// white/red breakdown is present it must account for the clover share.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    pub grass_pct: f64,
    pub clover_pct: f64,
    pub white_pct: Option<f64>,
    pub red_pct: Option<f64>,
    pub weeds_pct: f64,
}

impl LabelVector {
    pub fn is_complete(&self) -> bool {
        self.white_pct.is_some() && self.red_pct.is_some()
    }

    /// The four regression targets as fractions of total biomass:
    /// `[grass, white clover, red clover, weeds] / 100`.
    ///
    /// Requires complete labels.
    pub fn target_fractions(&self) -> Option<[f64; 4]> {
        Some([
            self.grass_pct / 100.0,
            self.white_pct? / 100.0,
            self.red_pct? / 100.0,
            self.weeds_pct / 100.0,
        ])
    }

    fn invariant_violation(&self) -> Option<String> {
        let in_range = |v: f64| (0.0..=100.0).contains(&v);
        for (name, v) in [
            ("grass_pct", Some(self.grass_pct)),
            ("clover_pct", Some(self.clover_pct)),
            ("white_clover_pct", self.white_pct),
            ("red_clover_pct", self.red_pct),
            ("weeds_pct", Some(self.weeds_pct)),
        ] {
            if let Some(v) = v {
                if !v.is_finite() || !in_range(v) {
                    return Some(format!("{name} = {v} outside [0, 100]"));
                }
            }
        }
        let total = self.grass_pct + self.clover_pct + self.weeds_pct;
        if (total - 100.0).abs() > SIMPLEX_TOLERANCE {
            return Some(format!(
                "grass + clover + weeds = {total} is not 100 within {SIMPLEX_TOLERANCE}"
            ));
        }
        match (self.white_pct, self.red_pct) {
            (Some(w), Some(r)) => {
                if (w + r - self.clover_pct).abs() > SIMPLEX_TOLERANCE {
                    return Some(format!(
                        "white + red = {} is not clover ({}) within {SIMPLEX_TOLERANCE}",
                        w + r,
                        self.clover_pct
                    ));
                }
            }
            (None, None) => {}
            _ => {
                return Some(
                    "white_clover_pct and red_clover_pct must be present together".to_string(),
                )
            }
        }
        None
    }

    pub fn validate(&self, image_id: &str) -> Result<()> {
        match self.invariant_violation() {
            Some(constraint) => Err(Error::InvalidLabel {
                image_id: image_id.to_string(),
                constraint,
            }),
            None => Ok(()),
        }
    }
}

/// Labeling depth of a sample. Semi-advanced rows are grouped under
/// `Advanced` at ingest; only advanced rows carry the white/red breakdown
/// before imputation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Basic,
    Advanced,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Basic => "basic",
            Category::Advanced => "advanced",
        }
    }
}

/// One field image with its season, labeling category, and label vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image_id: String,
    pub harvest_season: u8,
    pub category: Category,
    pub labels: LabelVector,
    /// Resolved by [`load_dataset`]; `None` when labels were loaded without
    /// an image directory (imputation and splitting work on labels alone).
    pub image_path: Option<PathBuf>,
}

impl Sample {
    pub fn require_image_path(&self) -> Result<&Path> {
        self.image_path
            .as_deref()
            .ok_or_else(|| Error::MissingImage(PathBuf::from(&self.image_id)))
    }
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str, row: usize) -> Result<T> {
    field.trim().parse().map_err(|_| Error::MalformedRow {
        row,
        msg: format!("cannot parse {name} from {field:?}"),
    })
}

fn parse_optional(field: &str, name: &str, row: usize) -> Result<Option<f64>> {
    let t = field.trim();
    if t.is_empty() {
        Ok(None)
    } else {
        parse_field(t, name, row).map(Some)
    }
}

/// Parse and validate the labels CSV. Image paths are left unresolved.
///
/// Row order is preserved. `row` in errors is the 1-based data row index
/// (the header is row 0).
pub fn load_labels_csv(labels_csv: &Path) -> Result<Vec<Sample>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(labels_csv)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", labels_csv.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRow {
            row: 0,
            msg: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != CSV_HEADER {
        return Err(Error::MalformedRow {
            row: 0,
            msg: format!("header must be {:?}, got {:?}", CSV_HEADER.join(","), names.join(",")),
        });
    }

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            msg: e.to_string(),
        })?;
        if record.len() != CSV_HEADER.len() {
            return Err(Error::MalformedRow {
                row,
                msg: format!("expected {} columns, got {}", CSV_HEADER.len(), record.len()),
            });
        }
        let image_id = record[0].trim().to_string();
        if image_id.is_empty() {
            return Err(Error::MalformedRow {
                row,
                msg: "empty image_id".to_string(),
            });
        }
        let harvest_season: u8 = parse_field(&record[1], "harvest_season", row)?;
        if !(1..=4).contains(&harvest_season) {
            return Err(Error::InvalidLabel {
                image_id,
                constraint: format!("harvest_season {harvest_season} outside 1..=4"),
            });
        }
        let category = match record[2].trim().to_ascii_lowercase().as_str() {
            "basic" => Category::Basic,
            "semi-advanced" | "advanced" => Category::Advanced,
            other => {
                return Err(Error::MalformedRow {
                    row,
                    msg: format!("unknown category {other:?}"),
                })
            }
        };
        let labels = LabelVector {
            grass_pct: parse_field(&record[3], "grass_pct", row)?,
            clover_pct: parse_field(&record[4], "clover_pct", row)?,
            white_pct: parse_optional(&record[5], "white_clover_pct", row)?,
            red_pct: parse_optional(&record[6], "red_clover_pct", row)?,
            weeds_pct: parse_field(&record[7], "weeds_pct", row)?,
        };
        labels.validate(&image_id)?;
        // Advanced rows must carry the breakdown. Basic rows may carry it too
        // once an imputation pass has filled the columns.
        if category == Category::Advanced && !labels.is_complete() {
            return Err(Error::InvalidLabel {
                image_id,
                constraint: "advanced row is missing white/red clover values".to_string(),
            });
        }
        samples.push(Sample {
            image_id,
            harvest_season,
            category,
            labels,
            image_path: None,
        });
    }
    Ok(samples)
}

/// Resolve `image_id` to an existing file under `image_dir`.
///
/// Accepts the id verbatim (when it already carries an extension) or with a
/// `.png` / `.jpg` / `.jpeg` suffix, in that order.
pub fn resolve_image_path(image_dir: &Path, image_id: &str) -> Result<PathBuf> {
    let mut candidates = vec![image_dir.join(image_id)];
    for ext in ["png", "jpg", "jpeg"] {
        candidates.push(image_dir.join(format!("{image_id}.{ext}")));
    }
    for c in candidates {
        if c.is_file() {
            return Ok(c);
        }
    }
    Err(Error::MissingImage(image_dir.join(image_id)))
}

/// Parse the labels CSV and resolve every sample's image file.
pub fn load_dataset(labels_csv: &Path, image_dir: &Path) -> Result<Vec<Sample>> {
    let mut samples = load_labels_csv(labels_csv)?;
    for s in &mut samples {
        s.image_path = Some(resolve_image_path(image_dir, &s.image_id)?);
    }
    Ok(samples)
}

fn fmt_pct(v: f64) -> String {
    // shortest round-trip representation keeps rewrites byte-stable
    format!("{v}")
}

/// Write samples back in the labels CSV schema (used by the impute command).
pub fn write_labels_csv(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&CSV_HEADER.join(","));
    out.push('\n');
    for s in samples {
        let white = s.labels.white_pct.map(fmt_pct).unwrap_or_default();
        let red = s.labels.red_pct.map(fmt_pct).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.image_id,
            s.harvest_season,
            s.category.as_str(),
            fmt_pct(s.labels.grass_pct),
            fmt_pct(s.labels.clover_pct),
            white,
            red,
            fmt_pct(s.labels.weeds_pct),
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Persisted train/validation partition, so one split can be reused across
/// every model variant being compared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitManifest {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

impl SplitManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "seed={}", self.seed);
        out.push_str("train:\n");
        for id in &self.train_ids {
            out.push_str(id);
            out.push('\n');
        }
        out.push_str("val:\n");
        for id in &self.val_ids {
            out.push_str(id);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let seed_line = lines
            .next()
            .ok_or_else(|| Error::Config("empty split manifest".to_string()))?;
        let seed = seed_line
            .strip_prefix("seed=")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Config(format!("bad manifest seed line: {seed_line:?}")))?;
        let mut train_ids = Vec::new();
        let mut val_ids = Vec::new();
        let mut section: Option<bool> = None; // true = train
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            match line {
                "train:" => section = Some(true),
                "val:" => section = Some(false),
                id => match section {
                    Some(true) => train_ids.push(id.to_string()),
                    Some(false) => val_ids.push(id.to_string()),
                    None => {
                        return Err(Error::Config(format!(
                            "manifest id {id:?} before any section header"
                        )))
                    }
                },
            }
        }
        Ok(SplitManifest {
            seed,
            train_ids,
            val_ids,
        })
    }

    /// Check the manifest partitions exactly the given samples.
    pub fn validate_against(&self, samples: &[Sample]) -> Result<()> {
        let mut ids: Vec<&str> = samples.iter().map(|s| s.image_id.as_str()).collect();
        ids.sort_unstable();
        let mut listed: Vec<&str> = self
            .train_ids
            .iter()
            .chain(&self.val_ids)
            .map(String::as_str)
            .collect();
        listed.sort_unstable();
        if ids != listed {
            return Err(Error::Config(
                "split manifest does not partition the dataset ids".to_string(),
            ));
        }
        Ok(())
    }
}

/// Deterministic uniform random split without stratification.
///
/// Ids are sorted before shuffling so the result depends only on the id set
/// and the seed, not on input row order. Ids within each output list are
/// sorted.
pub fn split_dataset(samples: &[Sample], val_count: usize, seed: u64) -> Result<SplitManifest> {
    if val_count == 0 || val_count >= samples.len() {
        return Err(Error::Config(format!(
            "val_count {val_count} must be in 1..{} (total {})",
            samples.len(),
            samples.len()
        )));
    }
    let mut ids: Vec<String> = samples.iter().map(|s| s.image_id.clone()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != samples.len() {
        return Err(Error::Config("duplicate image_id in dataset".to_string()));
    }
    let mut rng = rng_from_seed(seed);
    ids.shuffle(&mut rng);
    let mut val_ids: Vec<String> = ids.drain(..val_count).collect();
    let mut train_ids = ids;
    train_ids.sort_unstable();
    val_ids.sort_unstable();
    Ok(SplitManifest {
        seed,
        train_ids,
        val_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("labels.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "{}", CSV_HEADER.join(",")).unwrap();
        write!(f, "{body}").unwrap();
        path
    }

    #[test]
    fn parses_advanced_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(dir.path(), "img1,1,advanced,50,30,18,12,20\n");
        let samples = load_labels_csv(&path).unwrap();
        assert_eq!(samples.len(), 1);
        let s = &samples[0];
        assert_eq!(s.category, Category::Advanced);
        assert_eq!(s.labels.grass_pct, 50.0);
        assert_eq!(s.labels.clover_pct, 30.0);
        assert_eq!(s.labels.white_pct, Some(18.0));
        assert_eq!(s.labels.red_pct, Some(12.0));
        assert_eq!(s.labels.weeds_pct, 20.0);
    }

    #[test]
    fn parses_basic_row_with_missing_subspecies() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(dir.path(), "img2,2,basic,60,25,,,15\n");
        let samples = load_labels_csv(&path).unwrap();
        assert_eq!(samples[0].category, Category::Basic);
        assert_eq!(samples[0].labels.white_pct, None);
        assert_eq!(samples[0].labels.red_pct, None);
    }

    #[test]
    fn rejects_simplex_violation() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(dir.path(), "img3,1,basic,60,25,,,20\n");
        let err = load_labels_csv(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("img3"), "{msg}");
        assert!(msg.contains("100"), "{msg}");
    }

    #[test]
    fn rejects_malformed_row_with_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            dir.path(),
            "ok,1,basic,60,25,,,15\nbad,1,basic,sixty,25,,,15\n",
        );
        let err = load_labels_csv(&path).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn rejects_half_present_subspecies() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(dir.path(), "img4,1,basic,60,25,10,,15\n");
        let err = load_labels_csv(&path).unwrap_err();
        assert!(err.to_string().contains("together"), "{err}");
    }

    #[test]
    fn semi_advanced_groups_to_advanced() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(dir.path(), "img5,1,semi-advanced,50,30,18,12,20\n");
        let samples = load_labels_csv(&path).unwrap();
        assert_eq!(samples[0].category, Category::Advanced);
    }

    fn fake_samples(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                image_id: format!("img{i:04}"),
                harvest_season: (i % 4 + 1) as u8,
                category: Category::Advanced,
                labels: LabelVector {
                    grass_pct: 50.0,
                    clover_pct: 30.0,
                    white_pct: Some(18.0),
                    red_pct: Some(12.0),
                    weeds_pct: 20.0,
                },
                image_path: None,
            })
            .collect()
    }

    #[test]
    fn split_261_gives_209_52() {
        let samples = fake_samples(261);
        let m = split_dataset(&samples, 52, 7).unwrap();
        assert_eq!(m.train_ids.len(), 209);
        assert_eq!(m.val_ids.len(), 52);
        let mut all: Vec<&String> = m.train_ids.iter().chain(&m.val_ids).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 261);
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let samples = fake_samples(40);
        let a = split_dataset(&samples, 10, 1).unwrap();
        let b = split_dataset(&samples, 10, 1).unwrap();
        let c = split_dataset(&samples, 10, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_ignores_input_order() {
        let mut samples = fake_samples(20);
        let a = split_dataset(&samples, 5, 3).unwrap();
        samples.reverse();
        let b = split_dataset(&samples, 5, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_rejects_out_of_range_val_count() {
        let samples = fake_samples(10);
        assert!(split_dataset(&samples, 0, 1).is_err());
        assert!(split_dataset(&samples, 10, 1).is_err());
        assert!(split_dataset(&samples, 11, 1).is_err());
    }

    #[test]
    fn manifest_roundtrip_is_byte_identical() {
        let samples = fake_samples(30);
        let m = split_dataset(&samples, 8, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("split1.txt");
        let p2 = dir.path().join("split2.txt");
        m.save(&p1).unwrap();
        let loaded = SplitManifest::load(&p1).unwrap();
        assert_eq!(loaded, m);
        loaded.save(&p2).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap()
        );
        loaded.validate_against(&samples).unwrap();
    }

    #[test]
    fn csv_roundtrip_is_value_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            dir.path(),
            "a,1,advanced,50,30,18,12,20\nb,2,basic,60.25,24.5,,,15.25\n",
        );
        let samples = load_labels_csv(&path).unwrap();
        let out = dir.path().join("rewritten.csv");
        write_labels_csv(&out, &samples).unwrap();
        let again = load_labels_csv(&out).unwrap();
        assert_eq!(samples, again);
    }
}
