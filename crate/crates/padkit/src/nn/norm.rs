//! Batch normalization with a fused backward pass.
//!
//! The training forward makes two passes (fused moment accumulation, then a
//! single multiply-add normalization); the backward recomputes the
//! normalized values from the parent activation instead of storing them.

use std::rc::Rc;

use ndarray::{Array1, ArrayD, IxDyn};
use rayon::prelude::*;

use super::{ops, BackwardOp, Elem, GradSink, NodeKind, Tape, Var};

/// Per-channel batch statistics produced by a training-mode forward.
pub struct BatchStats<F: Elem> {
    pub mean: Array1<F>,
    /// Biased (population) spatial-batch variance, as used for normalization.
    pub var: Array1<F>,
    pub count: usize,
}

struct BatchNormOp<F: Elem> {
    x: Var,
    gamma: Var,
    beta: Var,
    x_val: Rc<ArrayD<F>>,
    mean: Array1<F>,
    inv_std: Array1<F>,
    gamma_val: Rc<ArrayD<F>>,
}

impl<F: Elem> BackwardOp<F> for BatchNormOp<F> {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let _sp = super::prof::span("bn_bwd");
        let shape = self.x_val.shape().to_vec();
        let (batch, chans, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let spatial = h * w;
        let count = batch * spatial;
        let n = F::from_f64(count as f64);
        let g = grad.as_slice().expect("contiguous grad");
        let xs = self.x_val.as_slice().expect("contiguous x");
        let gm = self.gamma_val.as_slice().expect("contiguous gamma");
        let mean = self.mean.as_slice().expect("contiguous mean");
        let inv_std = self.inv_std.as_slice().expect("contiguous inv_std");

        // Per-channel sums: s1 = Σg, s2 = Σg·xhat (xhat recomputed from x).
        let sums: Vec<(F, F)> = (0..chans)
            .into_par_iter()
            .map(|c| {
                let mut s1 = F::zero();
                let mut s2 = F::zero();
                let (m, is) = (mean[c], inv_std[c]);
                for bi in 0..batch {
                    let base = (bi * chans + c) * spatial;
                    let gs = &g[base..base + spatial];
                    let xv = &xs[base..base + spatial];
                    for (gi, xi) in gs.iter().zip(xv) {
                        s1 += *gi;
                        s2 += *gi * (*xi - m) * is;
                    }
                }
                (s1, s2)
            })
            .collect();

        // dx = A_c·g + B_c·x + C_c with per-channel constants.
        let mut coeffs = Vec::with_capacity(chans);
        for c in 0..chans {
            let (s1, s2) = sums[c];
            let a = gm[c] * inv_std[c];
            let k = a / n;
            let b_coef = -k * s2 * inv_std[c];
            let c_coef = k * (s2 * inv_std[c] * mean[c] - s1);
            coeffs.push((a, b_coef, c_coef));
        }
        let mut dx = super::take_uninit::<F>(g.len());
        dx.par_chunks_mut(chans * spatial)
            .enumerate()
            .for_each(|(bi, dx_b)| {
                for c in 0..chans {
                    let (a, b_coef, c_coef) = coeffs[c];
                    let base = (bi * chans + c) * spatial;
                    let gs = &g[base..base + spatial];
                    let xv = &xs[base..base + spatial];
                    for ((d, gi), xi) in dx_b[c * spatial..(c + 1) * spatial]
                        .iter_mut()
                        .zip(gs)
                        .zip(xv)
                    {
                        *d = a * *gi + b_coef * *xi + c_coef;
                    }
                }
            });
        sink.accumulate(self.x, ArrayD::from_shape_vec(IxDyn(&shape), dx).unwrap());

        let dgamma: Vec<F> = sums.iter().map(|&(_, s2)| s2).collect();
        let dbeta: Vec<F> = sums.iter().map(|&(s1, _)| s1).collect();
        sink.accumulate(
            self.gamma,
            ArrayD::from_shape_vec(IxDyn(&[chans]), dgamma).unwrap(),
        );
        sink.accumulate(
            self.beta,
            ArrayD::from_shape_vec(IxDyn(&[chans]), dbeta).unwrap(),
        );
    }
}

/// Training-mode batch norm over `(B, C, H, W)` using batch statistics.
/// Returns the normalized output and the statistics for running-buffer
/// updates.
pub fn batch_norm_train<F: Elem>(
    tape: &Tape<F>,
    x: Var,
    gamma: Var,
    beta: Var,
    eps: f64,
) -> (Var, BatchStats<F>) {
    let _sp = super::prof::span("bn_fwd");
    let x_val = tape.value(x);
    let shape = x_val.shape().to_vec();
    assert_eq!(shape.len(), 4, "batch norm input must be (B,C,H,W)");
    let (batch, chans, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let spatial = h * w;
    let count = batch * spatial;
    let n = F::from_f64(count as f64);
    let xs = x_val.as_slice().expect("contiguous x");

    // Fused moments: E[x] and E[x²] in one pass per channel.
    let stats: Vec<(F, F)> = (0..chans)
        .into_par_iter()
        .map(|c| {
            let mut sum = F::zero();
            let mut sumsq = F::zero();
            for bi in 0..batch {
                let base = (bi * chans + c) * spatial;
                for &v in &xs[base..base + spatial] {
                    sum += v;
                    sumsq += v * v;
                }
            }
            let mean = sum / n;
            let var = (sumsq / n - mean * mean).max(F::zero());
            (mean, var)
        })
        .collect();

    let eps_f = F::from_f64(eps);
    let mean = Array1::from_iter(stats.iter().map(|&(m, _)| m));
    let inv_std = Array1::from_iter(stats.iter().map(|&(_, v)| F::one() / (v + eps_f).sqrt()));

    let gamma_val = tape.value(gamma);
    let beta_val = tape.value(beta);
    let gm = gamma_val.as_slice().expect("contiguous gamma");
    let bt = beta_val.as_slice().expect("contiguous beta");

    // out = x·scale_c + shift_c in one multiply-add pass.
    let mut scale = Vec::with_capacity(chans);
    let mut shift = Vec::with_capacity(chans);
    for c in 0..chans {
        let s = gm[c] * inv_std[c];
        scale.push(s);
        shift.push(bt[c] - mean[c] * s);
    }
    let mut out = super::take_uninit::<F>(xs.len());
    out.par_chunks_mut(chans * spatial)
        .enumerate()
        .for_each(|(bi, out_b)| {
            for c in 0..chans {
                let (s, t) = (scale[c], shift[c]);
                let base = (bi * chans + c) * spatial;
                let xv = &xs[base..base + spatial];
                for (o, xi) in out_b[c * spatial..(c + 1) * spatial].iter_mut().zip(xv) {
                    *o = *xi * s + t;
                }
            }
        });
    let out = ArrayD::from_shape_vec(IxDyn(&shape), out).unwrap();

    let op = BatchNormOp {
        x,
        gamma,
        beta,
        x_val: Rc::clone(&x_val),
        mean,
        inv_std,
        gamma_val,
    };
    let var_node = tape.push(out, NodeKind::Op(Box::new(op)));
    (
        var_node,
        BatchStats {
            mean: Array1::from_iter(stats.iter().map(|&(m, _)| m)),
            var: Array1::from_iter(stats.iter().map(|&(_, v)| v)),
            count,
        },
    )
}

/// Inference-mode batch norm using frozen running statistics.
///
/// On a gradient tape this composes broadcast operations (gamma/beta remain
/// differentiable); on a no-grad tape it runs one fused multiply-add pass.
pub fn batch_norm_eval<F: Elem>(
    tape: &Tape<F>,
    x: Var,
    gamma: Var,
    beta: Var,
    running_mean: &ArrayD<F>,
    running_var: &ArrayD<F>,
    eps: f64,
) -> Var {
    let chans = running_mean.len();
    let eps_f = F::from_f64(eps);
    if !tape.grad_enabled() {
        let x_val = tape.value(x);
        let shape = x_val.shape().to_vec();
        let (chans_x, spatial) = (shape[1], shape[2] * shape[3]);
        debug_assert_eq!(chans_x, chans);
        let xs = x_val.as_slice().expect("contiguous x");
        let gamma_val = tape.value(gamma);
        let beta_val = tape.value(beta);
        let gm = gamma_val.as_slice().unwrap();
        let bt = beta_val.as_slice().unwrap();
        let rm = running_mean.as_slice().unwrap();
        let rv = running_var.as_slice().unwrap();
        let mut scale = Vec::with_capacity(chans);
        let mut shift = Vec::with_capacity(chans);
        for c in 0..chans {
            let s = gm[c] / (rv[c] + eps_f).sqrt();
            scale.push(s);
            shift.push(bt[c] - rm[c] * s);
        }
        let mut out = super::take_uninit::<F>(xs.len());
        out.par_chunks_mut(chans * spatial)
            .enumerate()
            .for_each(|(bi, out_b)| {
                for c in 0..chans {
                    let (s, t) = (scale[c], shift[c]);
                    let base = (bi * chans + c) * spatial;
                    let xv = &xs[base..base + spatial];
                    for (o, xi) in out_b[c * spatial..(c + 1) * spatial].iter_mut().zip(xv) {
                        *o = *xi * s + t;
                    }
                }
            });
        return tape.input(ArrayD::from_shape_vec(IxDyn(&shape), out).unwrap());
    }

    let shape = [1, chans, 1, 1];
    let mean = tape.input(
        running_mean
            .clone()
            .into_shape_with_order(IxDyn(&shape))
            .unwrap(),
    );
    let denom = tape.input(
        running_var
            .mapv(|v| (v + eps_f).sqrt())
            .into_shape_with_order(IxDyn(&shape))
            .unwrap(),
    );
    let gamma_r = ops::reshape(tape, gamma, &shape);
    let beta_r = ops::reshape(tape, beta, &shape);
    let centered = ops::sub(tape, x, mean);
    let scaled = ops::div(tape, centered, denom);
    let styled = ops::mul(tape, scaled, gamma_r);
    ops::add(tape, styled, beta_r)
}
