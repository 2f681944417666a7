//! Frozen convolutional feature extractor.
//!
//! A stack of blocks, each a 3x3 stride-1 pad-1 convolution, ReLU, and 2x2
//! max-pool. Extractor parameters are loaded from a weight file or randomly
//! initialized from a seed and are never updated by the optimizer; the
//! backward pass exists so gradient-checking tests can flip `trainable` on.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::layers::INIT_RANGE;
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::{Scalar, Tensor};

pub const KERNEL: usize = 3;

/// Where extractor parameters come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightsSource {
    File(PathBuf),
    RandomSeed(u64),
}

/// Channel widths per block plus the parameter source. Input is RGB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractorConfig {
    pub block_channels: Vec<usize>,
    pub source: WeightsSource,
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_channels.is_empty() {
            return Err(Error::Config(
                "extractor needs at least one conv block".to_string(),
            ));
        }
        if self.block_channels.iter().any(|&c| c == 0) {
            return Err(Error::Config(
                "extractor block channels must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

#[inline]
fn idx4(c_dim: usize, h: usize, w: usize, b: usize, c: usize, y: usize, x: usize) -> usize {
    ((b * c_dim + c) * h + y) * w + x
}

/// 3x3 convolution, stride 1, zero padding 1.
#[derive(Debug, Clone)]
pub struct Conv2d<T: Scalar> {
    /// `[out_channels, in_channels, 3, 3]`
    pub weight: Tensor<T>,
    /// `[out_channels]`
    pub bias: Tensor<T>,
    pub trainable: bool,
    input_cache: Option<Tensor<T>>,
    pub grad_weight: Option<Tensor<T>>,
    pub grad_bias: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(in_channels: usize, out_channels: usize, rng: &mut impl rand::Rng) -> Self {
        let lo = T::from_f64(-INIT_RANGE);
        let hi = T::from_f64(INIT_RANGE);
        Conv2d {
            weight: Tensor::uniform(&[out_channels, in_channels, KERNEL, KERNEL], lo, hi, rng),
            bias: Tensor::zeros(&[out_channels]),
            trainable: false,
            input_cache: None,
            grad_weight: None,
            grad_bias: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&mut self, x: &Tensor<T>, record: bool) -> Result<Tensor<T>> {
        let ic = self.in_channels();
        if x.rank() != 4 || x.shape()[1] != ic {
            return Err(Error::Shape(format!(
                "conv expects [batch, {ic}, h, w], got {:?}",
                x.shape()
            )));
        }
        let (batch, h, w) = (x.shape()[0], x.shape()[2], x.shape()[3]);
        let oc = self.out_channels();
        let mut out = Tensor::zeros(&[batch, oc, h, w]);

        let weight = self.weight.data();
        let bias = self.bias.data();
        let xs = x.data();
        let image_out = oc * h * w;
        let image_in = ic * h * w;
        out.data_mut()
            .par_chunks_mut(image_out)
            .enumerate()
            .for_each(|(b, chunk)| {
                let xin = &xs[b * image_in..(b + 1) * image_in];
                for co in 0..oc {
                    let bval = bias[co];
                    for y in 0..h {
                        for xo in 0..w {
                            let mut acc = bval;
                            for ci in 0..ic {
                                for ky in 0..KERNEL {
                                    let iy = y as isize + ky as isize - 1;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..KERNEL {
                                        let ix = xo as isize + kx as isize - 1;
                                        if ix < 0 || ix >= w as isize {
                                            continue;
                                        }
                                        let wv = weight
                                            [((co * ic + ci) * KERNEL + ky) * KERNEL + kx];
                                        let xv = xin
                                            [(ci * h + iy as usize) * w + ix as usize];
                                        acc += wv * xv;
                                    }
                                }
                            }
                            chunk[(co * h + y) * w + xo] = acc;
                        }
                    }
                }
            });

        if record {
            self.input_cache = Some(x.clone());
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input_cache.as_ref().ok_or(Error::NoForwardPass)?;
        let (batch, ic, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let oc = self.out_channels();
        if grad_out.shape() != [batch, oc, h, w] {
            return Err(Error::Shape(format!(
                "conv backward: grad {:?} vs output [{batch}, {oc}, {h}, {w}]",
                grad_out.shape()
            )));
        }
        let mut gw = Tensor::zeros(self.weight.shape());
        let mut gb = Tensor::zeros(self.bias.shape());
        let mut gx = Tensor::zeros(x.shape());
        for b in 0..batch {
            for co in 0..oc {
                for y in 0..h {
                    for xo in 0..w {
                        let g = grad_out.data()[idx4(oc, h, w, b, co, y, xo)];
                        gb.data_mut()[co] += g;
                        for ci in 0..ic {
                            for ky in 0..KERNEL {
                                let iy = y as isize + ky as isize - 1;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..KERNEL {
                                    let ix = xo as isize + kx as isize - 1;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let xi = idx4(ic, h, w, b, ci, iy as usize, ix as usize);
                                    let wi = ((co * ic + ci) * KERNEL + ky) * KERNEL + kx;
                                    gw.data_mut()[wi] += g * x.data()[xi];
                                    gx.data_mut()[xi] += g * self.weight.data()[wi];
                                }
                            }
                        }
                    }
                }
            }
        }
        if self.trainable {
            self.grad_weight = Some(gw);
            self.grad_bias = Some(gb);
        }
        Ok(gx)
    }
}

/// 2x2 max pooling with stride 2; trailing odd rows/columns are dropped.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2<T: Scalar> {
    cache: Option<(Vec<usize>, Vec<usize>)>, // input shape, argmax flat indices
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> MaxPool2<T> {
    pub fn new() -> Self {
        MaxPool2 {
            cache: None,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, record: bool) -> Result<Tensor<T>> {
        if x.rank() != 4 {
            return Err(Error::Shape(format!(
                "maxpool expects a 4-d tensor, got {:?}",
                x.shape()
            )));
        }
        let (batch, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(Error::Shape(format!(
                "maxpool input {h}x{w} too small to pool"
            )));
        }
        let mut out = Tensor::zeros(&[batch, c, oh, ow]);
        let mut argmax = vec![0usize; out.len()];
        let mut oi = 0;
        for b in 0..batch {
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = T::neg_infinity();
                        let mut best_i = 0;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let i = idx4(c, h, w, b, ci, oy * 2 + dy, ox * 2 + dx);
                                let v = x.data()[i];
                                if v > best {
                                    best = v;
                                    best_i = i;
                                }
                            }
                        }
                        out.data_mut()[oi] = best;
                        argmax[oi] = best_i;
                        oi += 1;
                    }
                }
            }
        }
        if record {
            self.cache = Some((x.shape().to_vec(), argmax));
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (in_shape, argmax) = self.cache.as_ref().ok_or(Error::NoForwardPass)?;
        if grad_out.len() != argmax.len() {
            return Err(Error::Shape("maxpool backward: length mismatch".to_string()));
        }
        let mut gx = Tensor::zeros(in_shape);
        for (&g, &i) in grad_out.data().iter().zip(argmax) {
            gx.data_mut()[i] += g;
        }
        Ok(gx)
    }
}

/// One extractor stage: conv, ReLU, pool.
#[derive(Debug, Clone)]
pub struct ConvBlock<T: Scalar> {
    pub conv: Conv2d<T>,
    relu_mask: Option<Vec<bool>>,
    pub pool: MaxPool2<T>,
}

impl<T: Scalar> ConvBlock<T> {
    fn forward(&mut self, x: &Tensor<T>, record: bool) -> Result<Tensor<T>> {
        let z = self.conv.forward(x, record)?;
        if record {
            self.relu_mask = Some(z.data().iter().map(|&v| v > T::zero()).collect());
        }
        let a = z.map(|v| if v > T::zero() { v } else { T::zero() });
        self.pool.forward(&a, record)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.pool.backward(grad_out)?;
        let mask = self.relu_mask.as_ref().ok_or(Error::NoForwardPass)?;
        let gated = Tensor::from_vec(
            g.shape(),
            g.data()
                .iter()
                .zip(mask)
                .map(|(&v, &m)| if m { v } else { T::zero() })
                .collect(),
        )?;
        self.conv.backward(&gated)
    }
}

/// The frozen feature extractor: conv blocks followed by a flatten.
#[derive(Debug, Clone)]
pub struct Extractor<T: Scalar> {
    pub blocks: Vec<ConvBlock<T>>,
    pre_flatten_shape: Option<Vec<usize>>,
}

impl<T: Scalar> Extractor<T> {
    /// Randomly initialized extractor; parameters are frozen.
    pub fn new_random(block_channels: &[usize], seed: u64) -> Result<Self> {
        ExtractorConfig {
            block_channels: block_channels.to_vec(),
            source: WeightsSource::RandomSeed(seed),
        }
        .validate()?;
        let mut rng = rng_from_seed(derive_seed(seed, "extractor"));
        let mut blocks = Vec::new();
        let mut ic = crate::img::CHANNELS;
        for &oc in block_channels {
            blocks.push(ConvBlock {
                conv: Conv2d::new(ic, oc, &mut rng),
                relu_mask: None,
                pool: MaxPool2::new(),
            });
            ic = oc;
        }
        Ok(Extractor {
            blocks,
            pre_flatten_shape: None,
        })
    }

    /// Rebuild from named tensors (`conv{i}/weight`, `conv{i}/bias` under
    /// the given prefix). Shapes must chain from 3 input channels.
    pub fn from_named_tensors(
        prefix: &str,
        tensors: &[(String, Tensor<T>)],
    ) -> Result<Self> {
        let get = |name: &str| -> Result<&Tensor<T>> {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let mut blocks = Vec::new();
        let mut ic = crate::img::CHANNELS;
        let mut i = 0;
        loop {
            let wname = format!("{prefix}conv{i}/weight");
            if !tensors.iter().any(|(n, _)| *n == wname) {
                break;
            }
            let weight = get(&wname)?.clone();
            let bias = get(&format!("{prefix}conv{i}/bias"))?.clone();
            if weight.rank() != 4
                || weight.shape()[1] != ic
                || weight.shape()[2] != KERNEL
                || weight.shape()[3] != KERNEL
            {
                return Err(Error::Checkpoint(format!(
                    "tensor {wname} has shape {:?}, expected [*, {ic}, {KERNEL}, {KERNEL}]",
                    weight.shape()
                )));
            }
            let oc = weight.shape()[0];
            if bias.shape() != [oc] {
                return Err(Error::Checkpoint(format!(
                    "tensor {prefix}conv{i}/bias has shape {:?}, expected [{oc}]",
                    bias.shape()
                )));
            }
            blocks.push(ConvBlock {
                conv: Conv2d {
                    weight,
                    bias,
                    trainable: false,
                    input_cache: None,
                    grad_weight: None,
                    grad_bias: None,
                },
                relu_mask: None,
                pool: MaxPool2::new(),
            });
            ic = oc;
            i += 1;
        }
        if blocks.is_empty() {
            return Err(Error::Checkpoint(format!(
                "no extractor tensors found under prefix {prefix:?}"
            )));
        }
        Ok(Extractor {
            blocks,
            pre_flatten_shape: None,
        })
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("conv{i}/weight"), &b.conv.weight));
            out.push((format!("conv{i}/bias"), &b.conv.bias));
        }
        out
    }

    pub fn block_channels(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.conv.out_channels()).collect()
    }

    /// Flattened feature length for a given input size.
    pub fn feature_len(&self, height: usize, width: usize) -> Result<usize> {
        let (mut h, mut w) = (height, width);
        for _ in &self.blocks {
            h /= 2;
            w /= 2;
            if h == 0 || w == 0 {
                return Err(Error::Shape(format!(
                    "input {height}x{width} too small for {} pooling stages",
                    self.blocks.len()
                )));
            }
        }
        Ok(self.blocks.last().unwrap().conv.out_channels() * h * w)
    }

    /// Forward to flattened feature vectors, `[batch, features]`.
    ///
    /// With `record = false` (the frozen path) no caches are kept and no
    /// gradient can flow.
    pub fn forward(&mut self, images: &Tensor<T>, record: bool) -> Result<Tensor<T>> {
        if images.rank() != 4 || images.shape()[1] != crate::img::CHANNELS {
            return Err(Error::Shape(format!(
                "extractor expects [batch, 3, h, w], got {:?}",
                images.shape()
            )));
        }
        let batch = images.shape()[0];
        let mut cur = images.clone();
        for b in &mut self.blocks {
            cur = b.forward(&cur, record)?;
        }
        if record {
            self.pre_flatten_shape = Some(cur.shape().to_vec());
        }
        let features = cur.len() / batch;
        cur.reshape(&[batch, features])
    }

    /// Gradient propagation for tests; requires a recorded forward pass and
    /// `trainable` conv layers to collect parameter gradients.
    pub fn backward(&mut self, grad_features: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .pre_flatten_shape
            .as_ref()
            .ok_or(Error::NoForwardPass)?
            .clone();
        let mut g = grad_features.clone().reshape(&shape)?;
        for b in self.blocks.iter_mut().rev() {
            g = b.backward(&g)?;
        }
        Ok(g)
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        for b in &mut self.blocks {
            b.conv.trainable = trainable;
        }
    }
}
