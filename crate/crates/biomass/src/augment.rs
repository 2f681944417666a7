//! Label-preserving random image augmentation.
//!
//! Each training variant is one draw of an affine transform (rotation, shear,
//! per-axis zoom, fractional shift), an optional horizontal flip, and a
//! per-channel intensity offset. Geometry is applied by inverse-mapping every
//! output pixel through a single composed matrix, sampling nearest-neighbor,
//! with out-of-bounds source coordinates wrapping modulo the image size. The
//! resize from source resolution to the square output is folded into the same
//! matrix so each pixel is resampled exactly once.
//!
//! Randomness per item is derived from `(base_seed, epoch, image_id,
//! variant_index)`, so a stream can be regenerated item-by-item in any order
//! or degree of parallelism.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::img::{Image, CHANNELS};
use crate::rng::{rng_from_seed, SeedHasher};

/// Augmentation ranges. Defaults mirror the training recipe: ±15° rotation,
/// ±15% zoom, ±20% shift, ±15° shear, horizontal flips, ±50 channel shift,
/// 500×500 output, ten variants per source image per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub rotation_deg: f64,
    pub zoom_frac: f64,
    pub shift_frac: f64,
    pub shear_deg: f64,
    pub hflip: bool,
    pub channel_shift: f64,
    pub out_size: usize,
    pub variants_per_image: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation_deg: 15.0,
            zoom_frac: 0.15,
            shift_frac: 0.20,
            shear_deg: 15.0,
            hflip: true,
            channel_shift: 50.0,
            out_size: 500,
            variants_per_image: 10,
        }
    }
}

impl AugmentConfig {
    /// A configuration that reduces augmentation to a deterministic resize.
    pub fn disabled(out_size: usize) -> Self {
        AugmentConfig {
            rotation_deg: 0.0,
            zoom_frac: 0.0,
            shift_frac: 0.0,
            shear_deg: 0.0,
            hflip: false,
            channel_shift: 0.0,
            out_size,
            variants_per_image: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rotation_deg", self.rotation_deg),
            ("zoom_frac", self.zoom_frac),
            ("shift_frac", self.shift_frac),
            ("shear_deg", self.shear_deg),
            ("channel_shift", self.channel_shift),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("augment {name} must be >= 0, got {v}")));
            }
        }
        if self.zoom_frac >= 1.0 {
            return Err(Error::Config(format!(
                "augment zoom_frac must be < 1, got {}",
                self.zoom_frac
            )));
        }
        if self.out_size == 0 {
            return Err(Error::Config("augment out_size must be > 0".to_string()));
        }
        if self.variants_per_image == 0 {
            return Err(Error::Config(
                "augment variants_per_image must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// One concrete sampled transform.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDraw {
    pub angle_deg: f64,
    pub zoom_x: f64,
    pub zoom_y: f64,
    pub shift_x: f64,
    pub shift_y: f64,
    pub shear_deg: f64,
    pub flip: bool,
    pub channel_offset: [f64; 3],
}

impl AffineDraw {
    pub fn identity() -> Self {
        AffineDraw {
            angle_deg: 0.0,
            zoom_x: 1.0,
            zoom_y: 1.0,
            shift_x: 0.0,
            shift_y: 0.0,
            shear_deg: 0.0,
            flip: false,
            channel_offset: [0.0; 3],
        }
    }
}

/// Uniform draw that returns `lo` exactly for a zero-width interval.
fn uniform_in(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        Uniform::new_inclusive(lo, hi).sample(rng)
    }
}

/// Sample one transform. Draw order is fixed: angle, zoom x/y, shift x/y,
/// shear, flip, channel offsets R/G/B.
pub fn draw_params(config: &AugmentConfig, rng: &mut impl Rng) -> AffineDraw {
    let r = config.rotation_deg;
    let z = config.zoom_frac;
    let s = config.shift_frac;
    let h = config.shear_deg;
    let c = config.channel_shift;
    AffineDraw {
        angle_deg: uniform_in(rng, -r, r),
        zoom_x: uniform_in(rng, 1.0 - z, 1.0 + z),
        zoom_y: uniform_in(rng, 1.0 - z, 1.0 + z),
        shift_x: uniform_in(rng, -s, s),
        shift_y: uniform_in(rng, -s, s),
        shear_deg: uniform_in(rng, -h, h),
        flip: config.hflip && rng.gen_bool(0.5),
        channel_offset: [
            uniform_in(rng, -c, c),
            uniform_in(rng, -c, c),
            uniform_in(rng, -c, c),
        ],
    }
}

/// Apply one transform, producing an `out_size` × `out_size` image.
///
/// Forward geometry about the image center is rotation, then shear, then
/// zoom (scaled so the source extent fills the output), then a pixel shift;
/// the flip is a final horizontal mirror. Implementation inverse-maps each
/// output pixel through the composed matrix, samples nearest-neighbor, and
/// wraps source coordinates modulo the image dimensions.
pub fn apply_affine(image: &Image, draw: &AffineDraw, out_size: usize) -> Result<Image> {
    if draw.zoom_x <= 0.0 || draw.zoom_y <= 0.0 {
        return Err(Error::Config(format!(
            "degenerate zoom ({}, {})",
            draw.zoom_x, draw.zoom_y
        )));
    }
    let w = image.width;
    let h = image.height;
    if w == 0 || h == 0 || out_size == 0 {
        return Err(Error::Config("empty image or zero out_size".to_string()));
    }

    let theta = draw.angle_deg.to_radians();
    let phi = draw.shear_deg.to_radians();
    let (sin_t, cos_t) = theta.sin_cos();
    let tan_p = phi.tan();

    // Inverse of R(theta) . Shear(phi) . Zoom is Zoom^-1 . Shear^-1 . R(-theta).
    // The output->source rescale folds into the zoom term.
    let inv_zx = w as f64 / (out_size as f64 * draw.zoom_x);
    let inv_zy = h as f64 / (out_size as f64 * draw.zoom_y);
    // Shear^-1 . R(-theta)
    let a = cos_t - tan_p * (-sin_t);
    let b = sin_t - tan_p * cos_t;
    let c2 = -sin_t;
    let d = cos_t;
    // rows of M = Zoom^-1 . (that product)
    let m00 = inv_zx * a;
    let m01 = inv_zx * b;
    let m10 = inv_zy * c2;
    let m11 = inv_zy * d;

    let c_out = (out_size as f64 - 1.0) / 2.0;
    let c_src_x = (w as f64 - 1.0) / 2.0;
    let c_src_y = (h as f64 - 1.0) / 2.0;
    let t_x = draw.shift_x * w as f64;
    let t_y = draw.shift_y * h as f64;

    let offs = [
        draw.channel_offset[0] as f32,
        draw.channel_offset[1] as f32,
        draw.channel_offset[2] as f32,
    ];

    let mut out = Image::new(out_size, out_size);
    for oy in 0..out_size {
        let py = oy as f64 - c_out;
        for ox in 0..out_size {
            let sample_x = if draw.flip { out_size - 1 - ox } else { ox };
            let px = sample_x as f64 - c_out;
            let sx = m00 * px + m01 * py + c_src_x + t_x;
            let sy = m10 * px + m11 * py + c_src_y + t_y;
            let xi = (sx.round() as i64).rem_euclid(w as i64) as usize;
            let yi = (sy.round() as i64).rem_euclid(h as i64) as usize;
            for ch in 0..CHANNELS {
                let v = image.get(xi, yi, ch) + offs[ch];
                out.set(ox, oy, ch, v.clamp(0.0, 255.0));
            }
        }
    }
    Ok(out)
}

/// Deterministic nearest-neighbor resize to a square; identical to applying
/// the identity draw. Used for validation and prediction inputs.
pub fn resize_to(image: &Image, out_size: usize) -> Image {
    apply_affine(image, &AffineDraw::identity(), out_size)
        .expect("identity draw cannot be degenerate")
}

/// Per-category loss weights carried through the augmented stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleWeights {
    pub basic: f64,
    pub advanced: f64,
}

impl Default for SampleWeights {
    fn default() -> Self {
        SampleWeights {
            basic: 1.0,
            advanced: 1.5,
        }
    }
}

impl SampleWeights {
    pub fn validate(&self) -> Result<()> {
        if self.basic <= 0.0 || self.advanced <= 0.0 {
            return Err(Error::Config("sample weights must be > 0".to_string()));
        }
        Ok(())
    }

    pub fn for_sample(&self, sample: &Sample) -> f64 {
        match sample.category {
            crate::data::Category::Basic => self.basic,
            crate::data::Category::Advanced => self.advanced,
        }
    }
}

/// One augmented training example.
#[derive(Debug, Clone)]
pub struct AugmentItem {
    pub image: Image,
    pub labels: crate::data::LabelVector,
    pub weight: f64,
}

/// Seed for one stream item, independent of iteration order.
pub fn item_seed(base_seed: u64, epoch: usize, image_id: &str, variant: usize) -> u64 {
    let mut h = SeedHasher::new(base_seed);
    h.write_str("augment-item");
    h.write_u64(epoch as u64);
    h.write_str(image_id);
    h.write_u64(variant as u64);
    h.finish()
}

/// Generate one item from an already-decoded source image.
pub fn generate_item_from_image(
    source: &Image,
    sample: &Sample,
    config: &AugmentConfig,
    epoch: usize,
    base_seed: u64,
    variant: usize,
    weights: SampleWeights,
) -> Result<AugmentItem> {
    let mut rng = rng_from_seed(item_seed(base_seed, epoch, &sample.image_id, variant));
    let draw = draw_params(config, &mut rng);
    let image = apply_affine(source, &draw, config.out_size)?;
    Ok(AugmentItem {
        image,
        labels: sample.labels.clone(),
        weight: weights.for_sample(sample),
    })
}

/// Generate one item, decoding the sample's image from disk.
pub fn generate_item(
    sample: &Sample,
    config: &AugmentConfig,
    epoch: usize,
    base_seed: u64,
    variant: usize,
    weights: SampleWeights,
) -> Result<AugmentItem> {
    let source = Image::load(sample.require_image_path()?)?;
    generate_item_from_image(&source, sample, config, epoch, base_seed, variant, weights)
}

fn check_stream_preconditions(samples: &[Sample], config: &AugmentConfig) -> Result<()> {
    config.validate()?;
    for s in samples {
        if !s.labels.is_complete() {
            return Err(Error::InvalidLabel {
                image_id: s.image_id.clone(),
                constraint: "incomplete labels (run imputation first)".to_string(),
            });
        }
        s.require_image_path()?;
    }
    Ok(())
}

/// Lazily yield `variants_per_image` augmented items per sample, in
/// sample-major order. Each sample's source image is decoded once and reused
/// across its variants.
pub fn augment_epoch<'a>(
    samples: &'a [Sample],
    config: &'a AugmentConfig,
    epoch: usize,
    base_seed: u64,
    weights: SampleWeights,
) -> Result<impl Iterator<Item = Result<AugmentItem>> + 'a> {
    check_stream_preconditions(samples, config)?;
    weights.validate()?;
    let variants = config.variants_per_image;
    let iter = samples.iter().flat_map(move |sample| {
        let source = Image::load(sample.image_path.as_deref().expect("checked above"));
        (0..variants).map(move |variant| match &source {
            Ok(img) => {
                generate_item_from_image(img, sample, config, epoch, base_seed, variant, weights)
            }
            Err(e) => Err(Error::MissingImage(match e {
                Error::MissingImage(p) => p.clone(),
                _ => sample.image_path.clone().unwrap_or_default(),
            })),
        })
    });
    Ok(iter)
}
