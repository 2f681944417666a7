//! Load a checkpoint, predict biomass percentages for a directory of images,
//! and score the predictions with per-component RMSE/MAE.
//!
//! Trains a small model first so the example is self-contained.
//!
//! ```bash
//! cargo run --release --example predict_and_evaluate
//! ```

use biomass::augment::AugmentConfig;
use biomass::checkpoint::Checkpoint;
use biomass::data::{split_dataset, Category, LabelVector, Sample};
use biomass::nn::{ExtractorConfig, WeightsSource};
use biomass::pipeline::{
    evaluate, train, write_predictions_csv, Model, OverallMode, TrainConfig,
};
use biomass::rng::rng_from_seed;
use rand::Rng;

fn main() -> biomass::Result<()> {
    let out_dir = std::env::temp_dir().join("biomass_predict_example");
    std::fs::create_dir_all(&out_dir).expect("create output dir");

    let mut rng = rng_from_seed(11);
    let samples: Vec<Sample> = (0..16)
        .map(|i| {
            let mut img = biomass::img::Image::new(20, 20);
            for v in img.pixels.iter_mut() {
                *v = rng.gen_range(0.0f32..=255.0).round();
            }
            let path = out_dir.join(format!("img{i:02}.png"));
            img.save_png(&path).unwrap();
            let grass = 30.0 + (i % 6) as f64 * 5.0;
            let clover = 20.0 + (i % 4) as f64 * 8.0;
            let white = clover * 0.6;
            Sample {
                image_id: format!("img{i:02}"),
                harvest_season: (i % 4 + 1) as u8,
                category: Category::Advanced,
                labels: LabelVector {
                    grass_pct: grass,
                    clover_pct: clover,
                    white_pct: Some(white),
                    red_pct: Some(clover - white),
                    weeds_pct: 100.0 - grass - clover,
                },
                image_path: Some(path),
            }
        })
        .collect();

    let split = split_dataset(&samples, 4, 9)?;
    let config = TrainConfig {
        epochs: 10,
        batch_size: 4,
        lr0: 2e-3,
        seed: 9,
        augment: AugmentConfig {
            out_size: 20,
            variants_per_image: 3,
            ..AugmentConfig::default()
        },
        head_dims: vec![16, 4],
        extractor: ExtractorConfig {
            block_channels: vec![4],
            source: WeightsSource::RandomSeed(2),
        },
        ..TrainConfig::default()
    };
    let outcome = train(&samples, &split, &config)?;
    let ckpt_path = out_dir.join("checkpoint.biom");
    outcome.best.save(&ckpt_path)?;

    // reload from disk, exactly as the CLI would
    let checkpoint = Checkpoint::load(&ckpt_path)?;
    let mut model = Model::from_checkpoint(&checkpoint)?;
    println!(
        "loaded checkpoint from epoch {} (val loss {:.5}, input {}x{})",
        checkpoint.epoch, checkpoint.val_loss, model.out_size, model.out_size
    );

    // predict the validation images
    let inputs: Vec<_> = samples
        .iter()
        .filter(|s| split.val_ids.contains(&s.image_id))
        .map(|s| (s.image_id.clone(), s.image_path.clone().unwrap()))
        .collect();
    let predictions = model.predict_paths(&inputs)?;
    write_predictions_csv(&out_dir.join("predictions.csv"), &predictions)?;
    for p in &predictions {
        println!(
            "{}: grass {:5.2}  clover {:5.2} (white {:5.2} / red {:5.2})  weeds {:5.2}",
            p.image_id,
            p.grass_pct,
            p.clover_pct(),
            p.white_pct,
            p.red_pct,
            p.weeds_pct
        );
    }

    let truth: Vec<Sample> = samples
        .iter()
        .filter(|s| split.val_ids.contains(&s.image_id))
        .cloned()
        .collect();
    let report = evaluate(&predictions, &truth, OverallMode::Pooled)?;
    println!("\n{}", report.render_table());
    Ok(())
}
