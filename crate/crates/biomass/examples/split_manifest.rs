//! Produce the seeded train/validation split and show that the persisted
//! manifest reproduces it exactly.
//!
//! ```bash
//! cargo run --example split_manifest
//! ```

use biomass::data::{split_dataset, Category, LabelVector, Sample, SplitManifest};

fn main() -> biomass::Result<()> {
    // 261 labeled field images, split 209 train / 52 validation
    let samples: Vec<Sample> = (0..261)
        .map(|i| Sample {
            image_id: format!("field_{i:04}"),
            harvest_season: (i % 4 + 1) as u8,
            category: if i % 5 < 2 { Category::Basic } else { Category::Advanced },
            labels: LabelVector {
                grass_pct: 50.0,
                clover_pct: 30.0,
                white_pct: Some(18.0),
                red_pct: Some(12.0),
                weeds_pct: 20.0,
            },
            image_path: None,
        })
        .collect();

    let manifest = split_dataset(&samples, 52, 2024)?;
    println!(
        "split {} samples into {} train / {} val with seed {}",
        samples.len(),
        manifest.train_ids.len(),
        manifest.val_ids.len(),
        manifest.seed
    );
    println!("first validation ids: {:?}", &manifest.val_ids[..5]);

    let path = std::env::temp_dir().join("biomass_split_manifest.txt");
    manifest.save(&path)?;
    let reloaded = SplitManifest::load(&path)?;
    assert_eq!(reloaded, manifest);
    println!("manifest round-trips exactly through {}", path.display());

    // the same seed always reproduces the same partition
    let again = split_dataset(&samples, 52, 2024)?;
    assert_eq!(again, manifest);
    println!("re-splitting with the same seed reproduces the partition");
    Ok(())
}
