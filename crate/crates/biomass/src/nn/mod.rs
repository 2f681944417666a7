//! The regression network: a frozen convolutional extractor feeding a
//! trainable head of dense + batch-norm + ReLU blocks, a 4-way dense output,
//! and a softmax that produces the biomass composition.

pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod layers;
pub mod loss;

pub use adam::{Adam, DecayMode};
pub use conv::{Extractor, ExtractorConfig, WeightsSource};
pub use layers::{softmax, softmax_backward, BatchNorm, Dense, Mode, Relu};
pub use loss::{weighted_rmse, weighted_rmse_with_grad};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// One hidden stage of the head.
#[derive(Debug, Clone)]
pub struct HiddenBlock<T: Scalar> {
    pub dense: Dense<T>,
    pub bn: BatchNorm<T>,
    pub relu: Relu<T>,
}

/// Trainable head: hidden dense/batch-norm/ReLU blocks, then a dense output
/// layer under a softmax.
#[derive(Debug, Clone)]
pub struct Head<T: Scalar> {
    pub hidden: Vec<HiddenBlock<T>>,
    pub output: Dense<T>,
    softmax_cache: Option<Tensor<T>>,
}

/// Mutable view of one trainable tensor and its gradient slot.
pub struct SlotMut<'a, T: Scalar> {
    pub name: String,
    pub param: &'a mut Tensor<T>,
    pub grad: &'a mut Option<Tensor<T>>,
}

impl<T: Scalar> Head<T> {
    /// `dims` lists layer widths ending in the output width, e.g.
    /// `[4096, 256, 4]` for two hidden blocks and a 4-way output.
    pub fn new(in_features: usize, dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("invalid head dims {dims:?}")));
        }
        let mut hidden = Vec::new();
        let mut cur = in_features;
        for &d in &dims[..dims.len() - 1] {
            hidden.push(HiddenBlock {
                dense: Dense::new(cur, d, rng),
                bn: BatchNorm::new(d),
                relu: Relu::new(),
            });
            cur = d;
        }
        Ok(Head {
            hidden,
            output: Dense::new(cur, *dims.last().unwrap(), rng),
            softmax_cache: None,
        })
    }

    pub fn in_features(&self) -> usize {
        self.hidden
            .first()
            .map(|b| b.dense.in_dim())
            .unwrap_or_else(|| self.output.in_dim())
    }

    pub fn out_dim(&self) -> usize {
        self.output.out_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.hidden.iter().map(|b| b.dense.out_dim()).collect();
        dims.push(self.output.out_dim());
        dims
    }

    /// Forward pass to softmax probabilities, `[batch, out]`.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, record: bool) -> Result<Tensor<T>> {
        let mut cur = x.clone();
        for block in &mut self.hidden {
            cur = block.dense.forward(&cur, record)?;
            cur = block.bn.forward(&cur, mode, record)?;
            cur = block.relu.forward(&cur, record);
        }
        let logits = self.output.forward(&cur, record)?;
        let probs = softmax(&logits)?;
        if record {
            self.softmax_cache = Some(probs.clone());
        }
        Ok(probs)
    }

    /// Backpropagate from the gradient of the loss with respect to the
    /// softmax probabilities. Parameter gradients are stored on each layer;
    /// the returned tensor is the gradient with respect to the input
    /// features.
    pub fn backward(&mut self, grad_probs: &Tensor<T>) -> Result<Tensor<T>> {
        let probs = self.softmax_cache.as_ref().ok_or(Error::NoForwardPass)?;
        let mut g = softmax_backward(probs, grad_probs)?;
        g = self.output.backward(&g)?;
        for block in self.hidden.iter_mut().rev() {
            g = block.relu.backward(&g)?;
            g = block.bn.backward(&g)?;
            g = block.dense.backward(&g)?;
        }
        Ok(g)
    }

    /// Trainable tensors in fixed slot order.
    pub fn slots_mut(&mut self) -> Vec<SlotMut<'_, T>> {
        let mut out = Vec::new();
        for (i, b) in self.hidden.iter_mut().enumerate() {
            out.push(SlotMut {
                name: format!("h{i}/dense/weight"),
                param: &mut b.dense.weight,
                grad: &mut b.dense.grad_weight,
            });
            out.push(SlotMut {
                name: format!("h{i}/dense/bias"),
                param: &mut b.dense.bias,
                grad: &mut b.dense.grad_bias,
            });
            out.push(SlotMut {
                name: format!("h{i}/bn/gamma"),
                param: &mut b.bn.gamma,
                grad: &mut b.bn.grad_gamma,
            });
            out.push(SlotMut {
                name: format!("h{i}/bn/beta"),
                param: &mut b.bn.beta,
                grad: &mut b.bn.grad_beta,
            });
        }
        out.push(SlotMut {
            name: "out/weight".to_string(),
            param: &mut self.output.weight,
            grad: &mut self.output.grad_weight,
        });
        out.push(SlotMut {
            name: "out/bias".to_string(),
            param: &mut self.output.bias,
            grad: &mut self.output.grad_bias,
        });
        out
    }

    pub fn num_slots(&self) -> usize {
        self.hidden.len() * 4 + 2
    }

    /// One optimizer step over all head parameters from the stored gradients.
    pub fn apply_adam(&mut self, adam: &mut Adam<T>) -> Result<()> {
        adam.begin_step();
        for (i, slot) in self.slots_mut().into_iter().enumerate() {
            let grad = slot.grad.as_ref().ok_or_else(|| {
                Error::Training(format!("no gradient for {} (backward not run?)", slot.name))
            })?;
            adam.update(i, slot.param, grad)?;
        }
        Ok(())
    }

    /// All persistent tensors (parameters and batch-norm running statistics).
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.hidden.iter().enumerate() {
            out.push((format!("h{i}/dense/weight"), &b.dense.weight));
            out.push((format!("h{i}/dense/bias"), &b.dense.bias));
            out.push((format!("h{i}/bn/gamma"), &b.bn.gamma));
            out.push((format!("h{i}/bn/beta"), &b.bn.beta));
            out.push((format!("h{i}/bn/running_mean"), &b.bn.running_mean));
            out.push((format!("h{i}/bn/running_var"), &b.bn.running_var));
        }
        out.push(("out/weight".to_string(), &self.output.weight));
        out.push(("out/bias".to_string(), &self.output.bias));
        out
    }

    /// Rebuild a head from named tensors produced by [`Head::named_tensors`].
    pub fn from_named_tensors(prefix: &str, tensors: &[(String, Tensor<T>)]) -> Result<Self> {
        let get = |name: String| -> Result<Tensor<T>> {
            tensors
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t.clone())
                .ok_or(Error::Checkpoint(format!("missing tensor {name}")))
        };
        let mut hidden = Vec::new();
        let mut i = 0;
        loop {
            let wname = format!("{prefix}h{i}/dense/weight");
            if !tensors.iter().any(|(n, _)| *n == wname) {
                break;
            }
            let weight = get(wname)?;
            if weight.rank() != 2 {
                return Err(Error::Checkpoint(format!(
                    "head dense weight {i} must be 2-d, got {:?}",
                    weight.shape()
                )));
            }
            let features = weight.shape()[1];
            let mut bn = BatchNorm::new(features);
            bn.gamma = get(format!("{prefix}h{i}/bn/gamma"))?;
            bn.beta = get(format!("{prefix}h{i}/bn/beta"))?;
            bn.running_mean = get(format!("{prefix}h{i}/bn/running_mean"))?;
            bn.running_var = get(format!("{prefix}h{i}/bn/running_var"))?;
            for t in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                if t.shape() != [features] {
                    return Err(Error::Checkpoint(format!(
                        "head bn tensors for block {i} must have shape [{features}]"
                    )));
                }
            }
            let mut dense = Dense::new(1, 1, &mut crate::rng::rng_from_seed(0));
            dense.weight = weight;
            dense.bias = get(format!("{prefix}h{i}/dense/bias"))?;
            hidden.push(HiddenBlock {
                dense,
                bn,
                relu: Relu::new(),
            });
            i += 1;
        }
        let mut output = Dense::new(1, 1, &mut crate::rng::rng_from_seed(0));
        output.weight = get(format!("{prefix}out/weight"))?;
        output.bias = get(format!("{prefix}out/bias"))?;
        if output.weight.rank() != 2 || output.bias.shape() != [output.weight.shape()[1]] {
            return Err(Error::Checkpoint(
                "head output tensors have inconsistent shapes".to_string(),
            ));
        }
        Ok(Head {
            hidden,
            output,
            softmax_cache: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn head_forward_rows_sum_to_one() {
        let mut rng = rng_from_seed(3);
        let mut head = Head::<f64>::new(6, &[5, 4], &mut rng).unwrap();
        let x = Tensor::<f64>::uniform(&[4, 6], -1.0, 1.0, &mut rng);
        let y = head.forward(&x, Mode::Train, false).unwrap();
        assert_eq!(y.shape(), &[4, 4]);
        for row in y.data().chunks(4) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_without_forward_errors() {
        let mut rng = rng_from_seed(3);
        let mut head = Head::<f64>::new(4, &[4], &mut rng).unwrap();
        let g = Tensor::zeros(&[2, 4]);
        assert!(matches!(head.backward(&g), Err(Error::NoForwardPass)));
    }

    #[test]
    fn named_tensor_roundtrip() {
        let mut rng = rng_from_seed(5);
        let head = Head::<f64>::new(7, &[6, 5, 4], &mut rng).unwrap();
        let named: Vec<(String, Tensor<f64>)> = head
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        let back = Head::from_named_tensors("", &named).unwrap();
        assert_eq!(back.dims(), vec![6, 5, 4]);
        assert_eq!(back.in_features(), 7);
        assert_eq!(back.output.weight, head.output.weight);
        assert_eq!(back.hidden[1].bn.running_var, head.hidden[1].bn.running_var);
    }

    #[test]
    fn gradient_of_mean_square_is_linear() {
        // L = mean(x^2) over a dense identity layer; dL/dx = 2x/n
        let mut rng = rng_from_seed(1);
        let mut dense = Dense::<f64>::new(3, 3, &mut rng);
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.set2(i, i, 1.0);
        }
        dense.weight = w;
        dense.bias = Tensor::zeros(&[3]);
        let x = Tensor::from_vec(&[1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let y = dense.forward(&x, true).unwrap();
        let n = y.len() as f64;
        let gy = y.map(|v| 2.0 * v / n);
        let gx = dense.backward(&gy).unwrap();
        for (g, v) in gx.data().iter().zip(x.data()) {
            assert!((g - 2.0 * v / 3.0).abs() < 1e-12);
        }
    }
}
