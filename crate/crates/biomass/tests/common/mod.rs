//! Shared synthetic fixtures for the integration suites.

use std::path::{Path, PathBuf};

use biomass::data::{Category, LabelVector, Sample};
use biomass::img::Image;
use biomass::rng::rng_from_seed;
use rand::Rng;

/// Deterministic noise image.
pub fn noise_image(size: usize, seed: u64) -> Image {
    let mut rng = rng_from_seed(seed);
    let mut img = Image::new(size, size);
    for v in img.pixels.iter_mut() {
        *v = rng.gen_range(0.0f32..=255.0).round();
    }
    img
}

/// A valid labeled sample; advanced samples carry the white/red breakdown.
pub fn make_sample(
    id: &str,
    season: u8,
    category: Category,
    grass: f64,
    clover: f64,
    white_frac: f64,
    image_path: Option<PathBuf>,
) -> Sample {
    let (white, red) = match category {
        Category::Advanced => (Some(clover * white_frac), Some(clover * (1.0 - white_frac))),
        Category::Basic => (None, None),
    };
    Sample {
        image_id: id.to_string(),
        harvest_season: season,
        category,
        labels: LabelVector {
            grass_pct: grass,
            clover_pct: clover,
            white_pct: white,
            red_pct: red,
            weeds_pct: 100.0 - grass - clover,
        },
        image_path,
    }
}

/// Write `n` synthetic samples (PNG images + complete labels) into `dir`,
/// returning the samples and the labels CSV path.
pub fn synthetic_dataset(dir: &Path, n: usize, image_size: usize) -> (Vec<Sample>, PathBuf) {
    let samples: Vec<Sample> = (0..n)
        .map(|i| {
            let img = noise_image(image_size, 1000 + i as u64);
            let path = dir.join(format!("syn{i:03}.png"));
            img.save_png(&path).unwrap();
            let grass = 20.0 + (i % 13) as f64 * 4.0;
            let clover = (85.0 - grass).max(10.0) - (i % 7) as f64 * 3.0;
            let mut s = make_sample(
                &format!("syn{i:03}"),
                (i % 4 + 1) as u8,
                Category::Advanced,
                grass,
                clover,
                0.2 + 0.12 * (i % 5) as f64,
                Some(path),
            );
            if i % 3 == 0 {
                // keep labels complete but mark as basic for weighting
                s.category = Category::Basic;
            }
            s
        })
        .collect();
    let labels = dir.join("labels.csv");
    biomass::data::write_labels_csv(&labels, &samples).unwrap();
    (samples, labels)
}

/// Labels CSV text with `n_basic` incomplete basic rows and `n_advanced`
/// complete advanced rows.
pub fn labels_csv_text(n_basic: usize, n_advanced: usize) -> String {
    let mut out = String::from(
        "image_id,harvest_season,category,grass_pct,clover_pct,white_clover_pct,red_clover_pct,weeds_pct\n",
    );
    for i in 0..n_advanced {
        let grass = 30.0 + (i % 10) as f64 * 2.0;
        let clover = 20.0 + (i % 6) as f64 * 5.0;
        let weeds = 100.0 - grass - clover;
        let white = clover * (0.3 + 0.1 * (i % 4) as f64);
        let red = clover - white;
        out.push_str(&format!(
            "adv{i:03},{},advanced,{grass},{clover},{white},{red},{weeds}\n",
            i % 4 + 1
        ));
    }
    for i in 0..n_basic {
        let grass = 35.0 + (i % 8) as f64 * 3.0;
        let clover = 15.0 + (i % 5) as f64 * 6.0;
        let weeds = 100.0 - grass - clover;
        out.push_str(&format!(
            "bas{i:03},{},basic,{grass},{clover},,,{weeds}\n",
            i % 4 + 1
        ));
    }
    out
}
