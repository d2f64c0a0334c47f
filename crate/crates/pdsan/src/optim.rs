//! Adam optimizer over ndarray tensors.
//!
//! Moments live next to the parameter tensors they track; one [`Adam`]
//! instance carries the shared step counter for a whole network so that bias
//! correction stays consistent across its tensors.

use ndarray::{Array, ArrayView, Dimension};
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// Completed update steps (for bias correction).
    pub t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T) -> Self {
        Adam {
            lr,
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            eps: T::from_f64(1e-8),
            t: 0,
        }
    }

    /// Start a new optimizer step covering every tensor of the network.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Apply one Adam update to a single tensor. `begin_step` must have been
    /// called for the current step.
    pub fn update<D: Dimension>(
        &self,
        param: &mut Array<T, D>,
        grad: &ArrayView<T, D>,
        m: &mut Array<T, D>,
        v: &mut Array<T, D>,
    ) {
        debug_assert!(self.t > 0);
        let one = T::one();
        let b1 = self.beta1;
        let b2 = self.beta2;
        let bc1 = one - b1.powi(self.t as i32);
        let bc2 = one - b2.powi(self.t as i32);
        ndarray::Zip::from(param)
            .and(grad)
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            });
    }
}

/// Moment buffers for one tensor.
#[derive(Clone, Debug)]
pub struct Moments<T, D: Dimension> {
    pub m: Array<T, D>,
    pub v: Array<T, D>,
}

impl<T: Scalar, D: Dimension> Moments<T, D> {
    pub fn zeros_like<S: ndarray::Data<Elem = T>>(p: &ndarray::ArrayBase<S, D>) -> Self {
        Moments { m: Array::zeros(p.raw_dim()), v: Array::zeros(p.raw_dim()) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matches_hand_computed_recurrence() {
        // single scalar parameter, fixed gradient sequence
        let grads = [0.3f64, -0.1, 0.25, 0.0, 1.5];
        let mut opt = Adam::new(0.01f64);
        let mut p = array![1.0f64];
        let mut m = array![0.0f64];
        let mut v = array![0.0f64];
        for &g in &grads {
            opt.begin_step();
            opt.update(&mut p, &array![g].view(), &mut m, &mut v);
        }

        // independent scalar recurrence
        let (b1, b2, eps, lr) = (0.9f64, 0.999, 1e-8, 0.01);
        let (mut pm, mut mm, mut vv) = (1.0f64, 0.0f64, 0.0f64);
        for (k, &g) in grads.iter().enumerate() {
            let t = (k + 1) as i32;
            mm = b1 * mm + (1.0 - b1) * g;
            vv = b2 * vv + (1.0 - b2) * g * g;
            let mh = mm / (1.0 - b1.powi(t));
            let vh = vv / (1.0 - b2.powi(t));
            pm -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((p[0] - pm).abs() < 1e-15, "{} vs {}", p[0], pm);
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut opt = Adam::new(0.05f64);
        let mut p = array![[0.5f64, -0.25], [4.0, 0.0]];
        let before = p.clone();
        let g = Array::zeros(p.raw_dim());
        let mut mom = Moments::zeros_like(&p);
        for _ in 0..3 {
            opt.begin_step();
            opt.update(&mut p, &g.view(), &mut mom.m, &mut mom.v);
        }
        assert_eq!(p, before);
        assert_eq!(opt.t, 3);
    }
}
