//! Layer wrappers: parameter registration plus forward wiring.

use ndarray::ArrayD;

use super::{conv, norm, ops, Elem, Initializer, ParamId, ParamStore, Tape, Var};

pub struct Conv2dLayer {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl Conv2dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Elem>(
        store: &mut ParamStore<F>,
        init: &mut Initializer,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Self {
        let w = store.register(
            format!("{name}.weight"),
            init.conv_weight::<F>(cout, cin, kernel, kernel),
            true,
        );
        let b = bias.then(|| store.register(format!("{name}.bias"), init.zeros::<F>(&[cout]), true));
        Self {
            w,
            b,
            stride: (stride, stride),
            pad: (pad, pad),
        }
    }

    pub fn forward<F: Elem>(&self, tape: &Tape<F>, store: &ParamStore<F>, x: Var) -> Var {
        let w = tape.leaf(store, self.w);
        let b = self.b.map(|b| tape.leaf(store, b));
        conv::conv2d(tape, x, w, b, self.stride, self.pad)
    }
}

pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm2d {
    pub fn new<F: Elem>(
        store: &mut ParamStore<F>,
        init: &mut Initializer,
        name: &str,
        chans: usize,
    ) -> Self {
        let gamma = store.register(format!("{name}.weight"), init.ones::<F>(&[chans]), true);
        let beta = store.register(format!("{name}.bias"), init.zeros::<F>(&[chans]), true);
        let running_mean =
            store.register(format!("{name}.running_mean"), init.zeros::<F>(&[chans]), false);
        let running_var =
            store.register(format!("{name}.running_var"), init.ones::<F>(&[chans]), false);
        Self {
            gamma,
            beta,
            running_mean,
            running_var,
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn forward<F: Elem>(
        &self,
        tape: &Tape<F>,
        store: &mut ParamStore<F>,
        x: Var,
        training: bool,
    ) -> Var {
        if training {
            let gamma = tape.leaf(store, self.gamma);
            let beta = tape.leaf(store, self.beta);
            let (out, stats) = norm::batch_norm_train(tape, x, gamma, beta, self.eps);
            // Running buffers track an unbiased variance estimate.
            let m = F::from_f64(self.momentum);
            let one_m = F::one() - m;
            let bessel = if stats.count > 1 {
                F::from_f64(stats.count as f64 / (stats.count - 1) as f64)
            } else {
                F::one()
            };
            {
                let rm = store.value_mut(self.running_mean);
                for (r, &b) in rm.iter_mut().zip(stats.mean.iter()) {
                    *r = one_m * *r + m * b;
                }
            }
            {
                let rv = store.value_mut(self.running_var);
                for (r, &b) in rv.iter_mut().zip(stats.var.iter()) {
                    *r = one_m * *r + m * b * bessel;
                }
            }
            out
        } else {
            let gamma = tape.leaf(store, self.gamma);
            let beta = tape.leaf(store, self.beta);
            let rm: ArrayD<F> = store.value(self.running_mean).clone();
            let rv: ArrayD<F> = store.value(self.running_var).clone();
            norm::batch_norm_eval(tape, x, gamma, beta, &rm, &rv, self.eps)
        }
    }
}

pub struct LinearLayer {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearLayer {
    pub fn new<F: Elem>(
        store: &mut ParamStore<F>,
        init: &mut Initializer,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let w = store.register(
            format!("{name}.weight"),
            init.linear_weight::<F>(out_dim, in_dim),
            true,
        );
        let b = store.register(format!("{name}.bias"), init.zeros::<F>(&[out_dim]), true);
        Self { w, b }
    }

    pub fn forward<F: Elem>(&self, tape: &Tape<F>, store: &ParamStore<F>, x: Var) -> Var {
        let w = tape.leaf(store, self.w);
        let b = tape.leaf(store, self.b);
        ops::linear(tape, x, w, Some(b))
    }
}
