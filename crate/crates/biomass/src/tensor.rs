//! Dense row-major tensors.
//!
//! Everything the network computes runs through [`Tensor`]. The element type
//! is generic so the training pipeline can run in `f32` while the
//! finite-difference test harness drives the identical code paths in `f64`.

use num_traits::Float;
use rand::distributions::uniform::SampleUniform;
use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::error::{Error, Result};

/// Element type for tensor computation.
pub trait Scalar:
    Float
    + SampleUniform
    + num_traits::NumAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn from_f32(v: f32) -> Self;
    fn as_f64(self) -> f64;
    fn as_f32(self) -> f32;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn from_f32(v: f32) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
    fn as_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn from_f32(v: f32) -> Self {
        f64::from(v)
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
}

/// Dense n-dimensional array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {:?} (= {})",
                data.len(),
                shape,
                expect
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Uniform random fill in `[lo, hi]`.
    pub fn uniform(shape: &[usize], lo: T, hi: T, rng: &mut impl Rng) -> Self {
        let len: usize = shape.iter().product();
        let dist = Uniform::new_inclusive(lo, hi);
        let data = (0..len).map(|_| dist.sample(rng)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Reinterpret the buffer under a new shape of the same length.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} to {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn at2(&self, r: usize, c: usize) -> T {
        debug_assert_eq!(self.rank(), 2);
        self.data[r * self.shape[1] + c]
    }

    pub fn set2(&mut self, r: usize, c: usize, v: T) {
        debug_assert_eq!(self.rank(), 2);
        self.data[r * self.shape[1] + c] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data.iter().map(|v| v.as_f32()).collect()
    }

    pub fn from_f32_slice(shape: &[usize], data: &[f32]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| T::from_f32(v)).collect())
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "shapes differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }
}

/// `a [m,k] @ b [k,n] -> [m,n]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::Shape(format!(
            "matmul: {:?} @ {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = Tensor::zeros(&[m, n]);
    // i-k-j order keeps the inner loop contiguous in b and out
    for i in 0..m {
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            let orow = &mut out.data[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `a^T [k,m] @ b [k,n] -> [m,n]` without materializing the transpose.
pub fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0] {
        return Err(Error::Shape(format!(
            "matmul_tn: {:?} @ {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (k, m) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = Tensor::zeros(&[m, n]);
    for p in 0..k {
        let arow = &a.data[p * m..(p + 1) * m];
        let brow = &b.data[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let orow = &mut out.data[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `a [m,k] @ b^T [n,k] -> [m,n]` without materializing the transpose.
pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[1] {
        return Err(Error::Shape(format!(
            "matmul_nt: {:?} @ {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[0];
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            out.data[i * n + j] = acc;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f64>::from_vec(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::<f64>::from_vec(&[2, 2], vec![1.0; 4]).is_ok());
    }

    #[test]
    fn matmul_hand_value() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    fn transpose(t: &Tensor<f64>) -> Tensor<f64> {
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let mut out = Tensor::zeros(&[c, r]);
        for i in 0..r {
            for j in 0..c {
                out.set2(j, i, t.at2(i, j));
            }
        }
        out
    }

    #[test]
    fn transposed_variants_agree_with_plain_matmul() {
        let mut rng = crate::rng::rng_from_seed(7);
        let a = Tensor::<f64>::uniform(&[3, 4], -1.0, 1.0, &mut rng);
        let b = Tensor::<f64>::uniform(&[3, 5], -1.0, 1.0, &mut rng);
        let want = matmul(&transpose(&a), &b).unwrap();
        let got = matmul_tn(&a, &b).unwrap();
        for (w, g) in want.data().iter().zip(got.data()) {
            assert!((w - g).abs() < 1e-12);
        }

        let x = Tensor::<f64>::uniform(&[4, 3], -1.0, 1.0, &mut rng);
        let y = Tensor::<f64>::uniform(&[5, 3], -1.0, 1.0, &mut rng);
        let want = matmul(&x, &transpose(&y)).unwrap();
        let got = matmul_nt(&x, &y).unwrap();
        for (w, g) in want.data().iter().zip(got.data()) {
            assert!((w - g).abs() < 1e-12);
        }
    }
}
