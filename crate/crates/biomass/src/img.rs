//! In-memory RGB images and file I/O.

use std::path::Path;

use image::{DynamicImage, RgbImage};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Dense RGB image, interleaved row-major (`[y][x][channel]`), pixel values
/// in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![0.0; width * height * CHANNELS],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.pixels[(y * self.width + x) * CHANNELS + c] = v;
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        Image {
            width: w as usize,
            height: h as usize,
            pixels: img.as_raw().iter().map(|&b| f32::from(b)).collect(),
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|&v| v.clamp(0.0, 255.0).round() as u8)
            .collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("pixel buffer length matches dimensions")
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingImage(path.to_path_buf()));
        }
        let dynimg = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(Self::from_dynamic(dynimg))
    }

    pub fn from_dynamic(img: DynamicImage) -> Self {
        Self::from_rgb8(&img.into_rgb8())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            source: e,
        })
    }
}
