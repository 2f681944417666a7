//! Sample-weighted root-mean-squared-error loss.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn check_shapes<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<(usize, usize)> {
    if pred.rank() != 2 || pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "loss: pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let batch = pred.shape()[0];
    if weights.shape() != [batch] {
        return Err(Error::Shape(format!(
            "loss: weights {:?} vs batch {batch}",
            weights.shape()
        )));
    }
    if weights.data().iter().any(|&w| w <= T::zero() || !w.is_finite()) {
        return Err(Error::Numeric("loss weights must be positive".to_string()));
    }
    Ok((batch, pred.shape()[1]))
}

/// `L = sqrt( sum_i w_i * mean_j (pred_ij - target_ij)^2 / sum_i w_i )`.
///
/// Invariant under uniform rescaling of all weights.
pub fn weighted_rmse<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<T> {
    weighted_rmse_with_grad(pred, target, weights).map(|(l, _)| l)
}

/// Loss value together with its gradient with respect to `pred`.
pub fn weighted_rmse_with_grad<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<(T, Tensor<T>)> {
    let (batch, cols) = check_shapes(pred, target, weights)?;
    let ncols = T::from_f64(cols as f64);
    let mut weight_sum = T::zero();
    let mut acc = T::zero();
    for (i, (prow, trow)) in pred
        .data()
        .chunks(cols)
        .zip(target.data().chunks(cols))
        .enumerate()
    {
        let w = weights.data()[i];
        weight_sum += w;
        let mut sq = T::zero();
        for (&p, &t) in prow.iter().zip(trow) {
            let d = p - t;
            sq += d * d;
        }
        acc += w * sq / ncols;
    }
    let loss = (acc / weight_sum).sqrt();

    // dL/dpred_ij = w_i (pred_ij - target_ij) / (cols * sum_w * L); zero at L = 0.
    let mut grad = Tensor::zeros(pred.shape());
    if loss > T::zero() {
        let denom = ncols * weight_sum * loss;
        for (i, ((prow, trow), grow)) in pred
            .data()
            .chunks(cols)
            .zip(target.data().chunks(cols))
            .zip(grad.data_mut().chunks_mut(cols))
            .enumerate()
        {
            let w = weights.data()[i];
            for ((&p, &t), g) in prow.iter().zip(trow).zip(grow.iter_mut()) {
                *g = w * (p - t) / denom;
            }
        }
    }
    let _ = batch;
    Ok((loss, grad))
}
