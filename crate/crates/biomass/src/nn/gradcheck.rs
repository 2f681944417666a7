//! Central finite-difference gradient oracle.
//!
//! Used by the test suites to verify analytic gradients. The oracle only
//! calls forward passes, so it stays independent of every backward
//! implementation it checks.

use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// Numerically differentiate a scalar function of one tensor by central
/// differences with step `h`, element by element.
pub fn finite_difference<T, F>(f: &mut F, at: &Tensor<T>, h: f64) -> Result<Tensor<T>>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> Result<T>,
{
    let step = T::from_f64(h);
    let two_h = T::from_f64(2.0 * h);
    let mut x = at.clone();
    let mut grad = Tensor::zeros(at.shape());
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + step;
        let fp = f(&x)?;
        x.data_mut()[i] = orig - step;
        let fm = f(&x)?;
        x.data_mut()[i] = orig;
        grad.data_mut()[i] = (fp - fm) / two_h;
    }
    Ok(grad)
}

/// Largest elementwise relative error between an analytic and a numeric
/// gradient: `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn max_relative_error<T: Scalar>(analytic: &Tensor<T>, numeric: &Tensor<T>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.data().iter().zip(numeric.data()) {
        let a = a.as_f64();
        let n = n.as_f64();
        let denom = a.abs().max(n.abs()).max(1e-6);
        worst = worst.max((a - n).abs() / denom);
    }
    worst
}
