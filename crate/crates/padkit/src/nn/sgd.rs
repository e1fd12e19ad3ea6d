//! Stochastic gradient descent with momentum and L2 weight decay.

use super::{Elem, ParamStore};

/// Update rule per trainable parameter:
///
/// ```text
/// g   ← grad + weight_decay · w
/// buf ← momentum · buf + g
/// w   ← w − lr · buf
/// ```
///
/// With zero data gradient and zero momentum this shrinks a parameter by the
/// factor `(1 − lr · weight_decay)` per step, i.e. weight decay acts as L2
/// regularization.
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
        }
    }

    pub fn step<F: Elem>(&self, store: &mut ParamStore<F>) {
        let lr = F::from_f64(self.lr);
        let mom = F::from_f64(self.momentum);
        let wd = F::from_f64(self.weight_decay);
        for param in store.iter_mut() {
            if !param.trainable {
                continue;
            }
            let value = std::rc::Rc::make_mut(&mut param.value);
            ndarray::Zip::from(&mut *value)
                .and(&mut param.momentum)
                .and(&param.grad)
                .for_each(|w, buf, &g| {
                    let g = g + wd * *w;
                    *buf = mom * *buf + g;
                    *w = *w - lr * *buf;
                });
        }
    }
}

/// Exponential learning-rate schedule: `lr_t = lr0 · gamma^t` for epoch `t`
/// (0-indexed; epoch 0 trains at `lr0`).
pub fn lr_for_epoch(lr0: f64, gamma: f64, epoch: usize) -> f64 {
    lr0 * gamma.powi(epoch as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn lr_schedule_matches_closed_form() {
        let lr5 = lr_for_epoch(0.01, 0.998, 5);
        assert!((lr5 - 0.01 * 0.998f64.powi(5)).abs() < 1e-15);
        for t in 1..70 {
            let ratio = lr_for_epoch(0.01, 0.998, t) / lr_for_epoch(0.01, 0.998, t - 1);
            assert!((ratio - 0.998).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_decay_acts_as_l2_with_zero_gradient() {
        let mut store = super::super::ParamStore::<f64>::new();
        let id = store.register("w", ArrayD::from_elem(IxDyn(&[3]), 2.0), true);
        let sgd = Sgd::new(0.01, 0.0, 5e-4);
        let factor = 1.0 - 0.01 * 5e-4;
        let mut expected = 2.0;
        for _ in 0..5 {
            store.zero_grads();
            sgd.step(&mut store);
            expected *= factor;
            for &v in store.value(id).iter() {
                assert!((v - expected).abs() < 1e-15);
            }
        }
    }
}
