//! Adam optimizer with bias correction and a per-step learning-rate decay.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// How the `decay` coefficient is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecayMode {
    /// `lr_t = lr0 / (1 + decay * t)` with `t` the number of completed steps.
    #[default]
    LrDecay,
    /// Constant learning rate; `decay` is an L2 coefficient added to gradients.
    L2,
}

#[derive(Debug, Clone)]
pub struct Adam<T: Scalar> {
    pub lr0: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub decay: T,
    pub decay_mode: DecayMode,
    /// Completed optimizer steps.
    pub step: u64,
    current_lr: T,
    slots: Vec<Option<(Tensor<T>, Tensor<T>)>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr0: f64, decay: f64, decay_mode: DecayMode, num_slots: usize) -> Self {
        Adam {
            lr0: T::from_f64(lr0),
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            eps: T::from_f64(1e-8),
            decay: T::from_f64(decay),
            decay_mode,
            step: 0,
            current_lr: T::from_f64(lr0),
            slots: vec![None; num_slots],
        }
    }

    /// Advance the step counter and fix the learning rate for the updates
    /// that follow. Call once per optimizer step, before `update`.
    pub fn begin_step(&mut self) -> T {
        self.current_lr = match self.decay_mode {
            DecayMode::LrDecay => {
                self.lr0 / (T::one() + self.decay * T::from_f64(self.step as f64))
            }
            DecayMode::L2 => self.lr0,
        };
        self.step += 1;
        self.current_lr
    }

    /// Learning rate fixed by the most recent `begin_step`.
    pub fn current_lr(&self) -> T {
        self.current_lr
    }

    /// Apply the Adam update for one parameter tensor.
    pub fn update(&mut self, slot: usize, param: &mut Tensor<T>, grad: &Tensor<T>) -> Result<()> {
        if self.step == 0 {
            return Err(Error::Training(
                "adam update before begin_step".to_string(),
            ));
        }
        if param.shape() != grad.shape() {
            return Err(Error::Shape(format!(
                "adam: param {:?} vs grad {:?}",
                param.shape(),
                grad.shape()
            )));
        }
        let slot_ref = self
            .slots
            .get_mut(slot)
            .ok_or_else(|| Error::Training(format!("adam slot {slot} out of range")))?;
        let (m, v) = slot_ref
            .get_or_insert_with(|| (Tensor::zeros(param.shape()), Tensor::zeros(param.shape())));
        if m.shape() != param.shape() {
            return Err(Error::Shape(format!(
                "adam slot {slot}: moment {:?} vs param {:?}",
                m.shape(),
                param.shape()
            )));
        }

        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        let l2 = match self.decay_mode {
            DecayMode::L2 => self.decay,
            DecayMode::LrDecay => T::zero(),
        };
        for ((p, g), (mv, vv)) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
        {
            let g = *g + l2 * *p;
            *mv = self.beta1 * *mv + (T::one() - self.beta1) * g;
            *vv = self.beta2 * *vv + (T::one() - self.beta2) * g * g;
            let mhat = *mv / bc1;
            let vhat = *vv / bc2;
            *p = *p - self.current_lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut adam = Adam::<f64>::new(1e-3, 0.0, DecayMode::LrDecay, 1);
        let mut p = Tensor::from_vec(&[1], vec![0.7]).unwrap();
        let g = Tensor::from_vec(&[1], vec![0.013]).unwrap();
        adam.begin_step();
        adam.update(0, &mut p, &g).unwrap();
        // bias-corrected first step: update = -lr * g / (|g| + eps') ~ -lr * sign(g)
        assert!((p.data()[0] - (0.7 - 1e-3)).abs() < 1e-6, "{}", p.data()[0]);

        let mut p = Tensor::from_vec(&[1], vec![-0.2]).unwrap();
        let g = Tensor::from_vec(&[1], vec![-4.0]).unwrap();
        let mut adam = Adam::<f64>::new(1e-3, 0.0, DecayMode::LrDecay, 1);
        adam.begin_step();
        adam.update(0, &mut p, &g).unwrap();
        assert!((p.data()[0] - (-0.2 + 1e-3)).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut adam = Adam::<f64>::new(1e-2, 0.0, DecayMode::LrDecay, 1);
        let mut p = Tensor::from_vec(&[3], vec![1.0, -2.0, 3.0]).unwrap();
        let g = Tensor::zeros(&[3]);
        for _ in 0..5 {
            adam.begin_step();
            adam.update(0, &mut p, &g).unwrap();
        }
        assert_eq!(p.data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn decay_zero_keeps_lr_constant_and_decay_shrinks_it() {
        let mut adam = Adam::<f64>::new(1e-3, 0.0, DecayMode::LrDecay, 0);
        for _ in 0..10 {
            assert_eq!(adam.begin_step(), 1e-3);
        }
        let mut adam = Adam::<f64>::new(1e-3, 5e-6, DecayMode::LrDecay, 0);
        assert_eq!(adam.begin_step(), 1e-3); // first step sees zero completed steps
        let lr2 = adam.begin_step();
        assert!((lr2 - 1e-3 / (1.0 + 5e-6)).abs() < 1e-18);
        for _ in 0..198 {
            adam.begin_step();
        }
        let lr = adam.begin_step();
        assert!((lr - 1e-3 / (1.0 + 5e-6 * 200.0)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut adam = Adam::<f64>::new(1e-3, 0.0, DecayMode::LrDecay, 1);
        let mut p = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let g = Tensor::zeros(&[3]);
        adam.begin_step();
        assert!(adam.update(0, &mut p, &g).is_err());
    }

    #[test]
    fn l2_mode_pulls_weights_toward_zero() {
        let mut adam = Adam::<f64>::new(1e-2, 0.1, DecayMode::L2, 1);
        let mut p = Tensor::from_vec(&[1], vec![5.0]).unwrap();
        let g = Tensor::zeros(&[1]);
        adam.begin_step();
        adam.update(0, &mut p, &g).unwrap();
        assert!(p.data()[0] < 5.0);
    }
}
