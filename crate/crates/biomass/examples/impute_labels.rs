//! Fill missing white/red clover labels with each of the three methods and
//! compare what they produce for the same basic rows.
//!
//! ```bash
//! cargo run --example impute_labels
//! ```

use biomass::data::{Category, LabelVector, Sample};
use biomass::impute::{self, FitScope};

fn advanced(id: &str, season: u8, grass: f64, clover: f64, white: f64) -> Sample {
    Sample {
        image_id: id.to_string(),
        harvest_season: season,
        category: Category::Advanced,
        labels: LabelVector {
            grass_pct: grass,
            clover_pct: clover,
            white_pct: Some(white),
            red_pct: Some(clover - white),
            weeds_pct: 100.0 - grass - clover,
        },
        image_path: None,
    }
}

fn basic(id: &str, season: u8, grass: f64, clover: f64) -> Sample {
    Sample {
        image_id: id.to_string(),
        harvest_season: season,
        category: Category::Basic,
        labels: LabelVector {
            grass_pct: grass,
            clover_pct: clover,
            white_pct: None,
            red_pct: None,
            weeds_pct: 100.0 - grass - clover,
        },
        image_path: None,
    }
}

fn main() -> biomass::Result<()> {
    let samples = vec![
        advanced("adv01", 1, 52.0, 28.0, 16.8),
        advanced("adv02", 2, 44.0, 36.0, 14.4),
        advanced("adv03", 3, 61.0, 22.0, 15.4),
        advanced("adv04", 4, 38.0, 41.0, 12.3),
        advanced("adv05", 1, 47.0, 31.0, 21.7),
        basic("bas01", 2, 55.0, 30.0),
        basic("bas02", 3, 40.0, 45.0),
        basic("bas03", 4, 70.0, 12.0),
    ];

    let fr = impute::mean_fractions(&samples)?;
    println!("mean fractions:   white={:.4} red={:.4}", fr.white_frac, fr.red_frac);
    let fr = impute::median_fractions(&samples)?;
    println!("median fractions: white={:.4} red={:.4}\n", fr.white_frac, fr.red_frac);

    let mean = impute::impute_mean(&samples)?;
    let median = impute::impute_median(&samples)?;
    let (regression, fit) = impute::impute_regression(&samples, 5, 42, FitScope::All)?;

    println!("regression coefficients ({} passes):", fit.iterations);
    for (name, c) in &fit.coefficients {
        println!("  {name:<12} {c:+.6}");
    }

    println!("\nimputed white/red clover percentages for the basic rows:");
    println!("{:<8}{:>8}{:>18}{:>18}{:>18}", "id", "clover", "mean", "median", "regression");
    for (i, s) in samples.iter().enumerate() {
        if s.category != Category::Basic {
            continue;
        }
        let fmt = |out: &[Sample]| {
            format!(
                "{:6.2} /{:6.2}",
                out[i].labels.white_pct.unwrap(),
                out[i].labels.red_pct.unwrap()
            )
        };
        println!(
            "{:<8}{:>8.1}{:>18}{:>18}{:>18}",
            s.image_id,
            s.labels.clover_pct,
            fmt(&mean),
            fmt(&median),
            fmt(&regression)
        );
    }
    println!("\nevery method preserves white + red = clover on every row");
    Ok(())
}
