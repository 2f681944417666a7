//! Trainable head layers: dense, batch normalization, ReLU, softmax.
//!
//! Each layer owns its parameters, gradient slots, and the forward cache its
//! backward pass needs. Calling `backward` without a recorded forward pass is
//! an error.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_nt, matmul_tn, Scalar, Tensor};

/// Range of the uniform parameter initialization.
pub const INIT_RANGE: f64 = 0.05;

/// Whether batch statistics or running statistics drive normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// Fully connected layer, `y = x W + b`.
#[derive(Debug, Clone)]
pub struct Dense<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub trainable: bool,
    input_cache: Option<Tensor<T>>,
    pub grad_weight: Option<Tensor<T>>,
    pub grad_bias: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let lo = T::from_f64(-INIT_RANGE);
        let hi = T::from_f64(INIT_RANGE);
        Dense {
            weight: Tensor::uniform(&[in_dim, out_dim], lo, hi, rng),
            bias: Tensor::zeros(&[out_dim]),
            trainable: true,
            input_cache: None,
            grad_weight: None,
            grad_bias: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&mut self, x: &Tensor<T>, record: bool) -> Result<Tensor<T>> {
        if x.rank() != 2 || x.shape()[1] != self.in_dim() {
            return Err(Error::Shape(format!(
                "dense expects [batch, {}], got {:?}",
                self.in_dim(),
                x.shape()
            )));
        }
        let mut y = matmul(x, &self.weight)?;
        let out = self.out_dim();
        for row in y.data_mut().chunks_mut(out) {
            for (v, b) in row.iter_mut().zip(self.bias.data()) {
                *v += *b;
            }
        }
        if record {
            self.input_cache = Some(x.clone());
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input_cache.as_ref().ok_or(Error::NoForwardPass)?;
        if grad_out.shape() != [x.shape()[0], self.out_dim()] {
            return Err(Error::Shape(format!(
                "dense backward: grad {:?} vs output [{}, {}]",
                grad_out.shape(),
                x.shape()[0],
                self.out_dim()
            )));
        }
        if self.trainable {
            self.grad_weight = Some(matmul_tn(x, grad_out)?);
            let mut gb = Tensor::zeros(&[self.out_dim()]);
            for row in grad_out.data().chunks(self.out_dim()) {
                for (g, &v) in gb.data_mut().iter_mut().zip(row) {
                    *g += v;
                }
            }
            self.grad_bias = Some(gb);
        }
        matmul_nt(grad_out, &self.weight)
    }
}

#[derive(Debug, Clone)]
struct BnCache<T: Scalar> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

/// Batch normalization over the feature axis of a `[batch, features]` input.
///
/// Train mode normalizes by batch statistics (population variance) and folds
/// them into the running estimates; inference mode normalizes by the running
/// estimates.
#[derive(Debug, Clone)]
pub struct BatchNorm<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: T,
    pub epsilon: T,
    pub trainable: bool,
    cache: Option<BnCache<T>>,
    pub grad_gamma: Option<Tensor<T>>,
    pub grad_beta: Option<Tensor<T>>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            gamma: Tensor::full(&[features], T::one()),
            beta: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::full(&[features], T::one()),
            momentum: T::from_f64(0.9),
            epsilon: T::from_f64(1e-5),
            trainable: true,
            cache: None,
            grad_gamma: None,
            grad_beta: None,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, record: bool) -> Result<Tensor<T>> {
        let f = self.features();
        if x.rank() != 2 || x.shape()[1] != f {
            return Err(Error::Shape(format!(
                "batchnorm expects [batch, {f}], got {:?}",
                x.shape()
            )));
        }
        let batch = x.shape()[0];
        match mode {
            Mode::Train => {
                if batch < 2 {
                    return Err(Error::Training(
                        "batch normalization needs batch size >= 2 in train mode".to_string(),
                    ));
                }
                let n = T::from_f64(batch as f64);
                let mut mean = vec![T::zero(); f];
                for row in x.data().chunks(f) {
                    for (m, &v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                for m in mean.iter_mut() {
                    *m /= n;
                }
                let mut var = vec![T::zero(); f];
                for row in x.data().chunks(f) {
                    for ((vv, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                        let d = v - m;
                        *vv += d * d;
                    }
                }
                for v in var.iter_mut() {
                    *v /= n;
                }
                let inv_std: Vec<T> = var
                    .iter()
                    .map(|&v| T::one() / (v + self.epsilon).sqrt())
                    .collect();

                let mut xhat = x.clone();
                for row in xhat.data_mut().chunks_mut(f) {
                    for ((v, &m), &is) in row.iter_mut().zip(&mean).zip(&inv_std) {
                        *v = (*v - m) * is;
                    }
                }
                let mut y = xhat.clone();
                for row in y.data_mut().chunks_mut(f) {
                    for ((v, &g), &b) in row.iter_mut().zip(self.gamma.data()).zip(self.beta.data())
                    {
                        *v = g * *v + b;
                    }
                }
                let keep = self.momentum;
                let take = T::one() - self.momentum;
                for ((rm, rv), (&m, &v)) in self
                    .running_mean
                    .data_mut()
                    .iter_mut()
                    .zip(self.running_var.data_mut().iter_mut())
                    .zip(mean.iter().zip(&var))
                {
                    *rm = keep * *rm + take * m;
                    *rv = keep * *rv + take * v;
                }
                if record {
                    self.cache = Some(BnCache { xhat, inv_std });
                }
                Ok(y)
            }
            Mode::Inference => {
                let mut y = x.clone();
                for row in y.data_mut().chunks_mut(f) {
                    for (j, v) in row.iter_mut().enumerate() {
                        let is = T::one()
                            / (self.running_var.data()[j] + self.epsilon).sqrt();
                        *v = self.gamma.data()[j] * ((*v - self.running_mean.data()[j]) * is)
                            + self.beta.data()[j];
                    }
                }
                Ok(y)
            }
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or(Error::NoForwardPass)?;
        let f = self.features();
        if grad_out.shape() != cache.xhat.shape() {
            return Err(Error::Shape(format!(
                "batchnorm backward: grad {:?} vs cached {:?}",
                grad_out.shape(),
                cache.xhat.shape()
            )));
        }
        let batch = grad_out.shape()[0];
        let n = T::from_f64(batch as f64);

        let mut sum_gy = vec![T::zero(); f];
        let mut sum_gy_xhat = vec![T::zero(); f];
        for (grow, xrow) in grad_out.data().chunks(f).zip(cache.xhat.data().chunks(f)) {
            for j in 0..f {
                sum_gy[j] += grow[j];
                sum_gy_xhat[j] += grow[j] * xrow[j];
            }
        }
        if self.trainable {
            self.grad_gamma = Some(Tensor::from_vec(&[f], sum_gy_xhat.clone())?);
            self.grad_beta = Some(Tensor::from_vec(&[f], sum_gy.clone())?);
        }

        // dx = gamma * inv_std / n * (n*gy - sum(gy) - xhat * sum(gy*xhat))
        let mut gx = Tensor::zeros(grad_out.shape());
        for ((grow, xrow), orow) in grad_out
            .data()
            .chunks(f)
            .zip(cache.xhat.data().chunks(f))
            .zip(gx.data_mut().chunks_mut(f))
        {
            for j in 0..f {
                let scale = self.gamma.data()[j] * cache.inv_std[j] / n;
                orow[j] = scale * (n * grow[j] - sum_gy[j] - xrow[j] * sum_gy_xhat[j]);
            }
        }
        Ok(gx)
    }
}

/// Rectified linear activation.
#[derive(Debug, Clone, Default)]
pub struct Relu<T: Scalar> {
    mask: Option<Vec<bool>>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Relu {
            mask: None,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, record: bool) -> Tensor<T> {
        if record {
            self.mask = Some(x.data().iter().map(|&v| v > T::zero()).collect());
        }
        x.map(|v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.as_ref().ok_or(Error::NoForwardPass)?;
        if mask.len() != grad_out.len() {
            return Err(Error::Shape("relu backward: length mismatch".to_string()));
        }
        let data = grad_out
            .data()
            .iter()
            .zip(mask)
            .map(|(&g, &m)| if m { g } else { T::zero() })
            .collect();
        Tensor::from_vec(grad_out.shape(), data)
    }
}

/// Row-wise softmax, stabilized by max subtraction.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 2 {
        return Err(Error::Shape(format!(
            "softmax expects a 2-d tensor, got {:?}",
            x.shape()
        )));
    }
    if !x.all_finite() {
        return Err(Error::Numeric("softmax input is not finite".to_string()));
    }
    let cols = x.shape()[1];
    let mut y = x.clone();
    for row in y.data_mut().chunks_mut(cols) {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(y)
}

/// Gradient through softmax given its output `y` and upstream gradient.
pub fn softmax_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if y.shape() != grad_out.shape() {
        return Err(Error::Shape("softmax backward: shape mismatch".to_string()));
    }
    let cols = y.shape()[1];
    let mut gx = Tensor::zeros(y.shape());
    for ((yrow, grow), orow) in y
        .data()
        .chunks(cols)
        .zip(grad_out.data().chunks(cols))
        .zip(gx.data_mut().chunks_mut(cols))
    {
        let mut dot = T::zero();
        for (yv, gv) in yrow.iter().zip(grow) {
            dot += *yv * *gv;
        }
        for ((o, &yv), &gv) in orow.iter_mut().zip(yrow).zip(grow) {
            *o = yv * (gv - dot);
        }
    }
    Ok(gx)
}
