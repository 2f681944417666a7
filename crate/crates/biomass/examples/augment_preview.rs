//! Draw random affine transforms and write augmented variants of a synthetic
//! field image as PNGs for visual inspection.
//!
//! ```bash
//! cargo run --example augment_preview
//! ```

use biomass::augment::{apply_affine, draw_params, AugmentConfig};
use biomass::img::Image;
use biomass::rng::rng_from_seed;

/// A green-ish canvas with blob "clover patches" so geometry is visible.
fn synthetic_field(size: usize) -> Image {
    let mut img = Image::new(size, size);
    for y in 0..size {
        for x in 0..size {
            img.set(x, y, 0, 40.0);
            img.set(x, y, 1, 110.0 + 20.0 * ((x / 16 + y / 16) % 2) as f32);
            img.set(x, y, 2, 35.0);
        }
    }
    let mut rng = rng_from_seed(7);
    for _ in 0..60 {
        use rand::Rng;
        let cx = rng.gen_range(10..size - 10) as i32;
        let cy = rng.gen_range(10..size - 10) as i32;
        let r = rng.gen_range(4..12) as i32;
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    let (x, y) = ((cx + dx) as usize, (cy + dy) as usize);
                    img.set(x, y, 0, 180.0);
                    img.set(x, y, 1, 200.0);
                    img.set(x, y, 2, 160.0);
                }
            }
        }
    }
    img
}

fn main() -> biomass::Result<()> {
    let source = synthetic_field(320);
    let config = AugmentConfig {
        out_size: 250,
        ..AugmentConfig::default()
    };

    let out_dir = std::env::temp_dir().join("biomass_augment_preview");
    std::fs::create_dir_all(&out_dir).expect("create output dir");
    source.save_png(&out_dir.join("source.png"))?;

    let mut rng = rng_from_seed(99);
    for i in 0..8 {
        let draw = draw_params(&config, &mut rng);
        println!(
            "variant {i}: angle {:+6.2}  zoom ({:.3}, {:.3})  shift ({:+.3}, {:+.3})  \
             shear {:+6.2}  flip {}  channel ({:+5.1}, {:+5.1}, {:+5.1})",
            draw.angle_deg,
            draw.zoom_x,
            draw.zoom_y,
            draw.shift_x,
            draw.shift_y,
            draw.shear_deg,
            draw.flip,
            draw.channel_offset[0],
            draw.channel_offset[1],
            draw.channel_offset[2],
        );
        let out = apply_affine(&source, &draw, config.out_size)?;
        out.save_png(&out_dir.join(format!("variant_{i}.png")))?;
    }
    println!("\nwrote source + 8 variants to {}", out_dir.display());
    println!("out-of-frame regions wrap around instead of leaving black borders");
    Ok(())
}
