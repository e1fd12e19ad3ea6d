//! Convolution and pooling, CPU implementation.
//!
//! Convolutions lower to im2col + GEMM per image and parallelize over the
//! batch. Gradient accumulation orders are fixed so results are bitwise
//! reproducible regardless of thread count.

use std::rc::Rc;

use ndarray::{ArrayD, Axis, IxDyn};
use rayon::prelude::*;

use super::{BackwardOp, Elem, GradSink, NodeKind, Tape, Var};

#[derive(Clone, Copy)]
struct ConvDims {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    hout: usize,
    wout: usize,
}

impl ConvDims {
    fn col_rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }
    fn spatial_out(&self) -> usize {
        self.hout * self.wout
    }
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.sh == 1 && self.sw == 1 && self.ph == 0 && self.pw == 0
    }
}

fn out_extent(input: usize, k: usize, s: usize, p: usize) -> usize {
    (input + 2 * p - k) / s + 1
}

/// Scatter one input patch row layout: col[(c·kh + ki)·kw + kj][oy·wout + ox].
fn im2col<F: Elem>(x: &[F], d: &ConvDims, col: &mut [F]) {
    let spatial = d.spatial_out();
    for c in 0..d.cin {
        let x_chan = &x[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = ((c * d.kh + ki) * d.kw + kj) * spatial;
                for oy in 0..d.hout {
                    let iy = (oy * d.sh + ki) as isize - d.ph as isize;
                    let seg = &mut col[row + oy * d.wout..row + (oy + 1) * d.wout];
                    if iy < 0 || iy >= d.h as isize {
                        seg.fill(F::zero());
                        continue;
                    }
                    let x_row = &x_chan[iy as usize * d.w..(iy as usize + 1) * d.w];
                    // valid ox range so that 0 <= ox·sw + kj − pw < w
                    let lo = if d.pw > kj {
                        (d.pw - kj).div_ceil(d.sw)
                    } else {
                        0
                    };
                    let hi = if d.w + d.pw > kj {
                        ((d.w + d.pw - kj - 1) / d.sw + 1).min(d.wout)
                    } else {
                        0
                    };
                    seg[..lo.min(d.wout)].fill(F::zero());
                    seg[hi..].fill(F::zero());
                    if d.sw == 1 {
                        let src = kj + lo - d.pw;
                        seg[lo..hi].copy_from_slice(&x_row[src..src + (hi - lo)]);
                    } else {
                        for ox in lo..hi {
                            seg[ox] = x_row[ox * d.sw + kj - d.pw];
                        }
                    }
                }
            }
        }
    }
}

/// Transpose of [`im2col`]: accumulates column gradients back into the image.
fn col2im<F: Elem>(col: &[F], d: &ConvDims, dx: &mut [F]) {
    let spatial = d.spatial_out();
    for c in 0..d.cin {
        let dx_chan = &mut dx[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = ((c * d.kh + ki) * d.kw + kj) * spatial;
                for oy in 0..d.hout {
                    let iy = (oy * d.sh + ki) as isize - d.ph as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let seg = &col[row + oy * d.wout..row + (oy + 1) * d.wout];
                    let lo = if d.pw > kj {
                        (d.pw - kj).div_ceil(d.sw)
                    } else {
                        0
                    };
                    let hi = if d.w + d.pw > kj {
                        ((d.w + d.pw - kj - 1) / d.sw + 1).min(d.wout)
                    } else {
                        0
                    };
                    let base = iy as usize * d.w;
                    for ox in lo..hi {
                        dx_chan[base + ox * d.sw + kj - d.pw] += seg[ox];
                    }
                }
            }
        }
    }
}

struct Conv2dOp<F: Elem> {
    x: Var,
    w: Var,
    b: Option<Var>,
    x_val: Rc<ArrayD<F>>,
    w_val: Rc<ArrayD<F>>,
    dims: ConvDims,
}

impl<F: Elem> BackwardOp<F> for Conv2dOp<F> {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let d = self.dims;
        let spatial = d.spatial_out();
        let col_rows = d.col_rows();
        let g = grad.as_slice().expect("contiguous grad");
        let xs = self.x_val.as_slice().expect("contiguous x");
        let ws = self.w_val.as_slice().expect("contiguous w");
        let img_in = d.cin * d.h * d.w;
        let img_out = d.cout * spatial;

        // dx: per-image W^T · g_b, then col2im. Scratch reused per chunk.
        let _sp = super::prof::span("conv_bwd_dx");
        let chunk_imgs = d.batch.div_ceil(rayon::current_num_threads()).max(1);
        let mut dx = if d.is_pointwise() {
            super::take_uninit::<F>(d.batch * img_in)
        } else {
            super::take_zeroed::<F>(d.batch * img_in) // col2im accumulates
        };
        dx.par_chunks_mut(chunk_imgs * img_in)
            .zip(g.par_chunks(chunk_imgs * img_out))
            .for_each(|(dx_chunk, g_chunk)| {
                let mut dcol = if d.is_pointwise() {
                    Vec::new()
                } else {
                    super::take_uninit::<F>(col_rows * spatial)
                };
                for (dx_b, g_b) in dx_chunk
                    .chunks_mut(img_in)
                    .zip(g_chunk.chunks(img_out))
                {
                    if d.is_pointwise() {
                        unsafe {
                            F::gemm(
                                col_rows, d.cout, spatial,
                                F::one(),
                                ws.as_ptr(), 1, col_rows as isize,
                                g_b.as_ptr(), spatial as isize, 1,
                                F::zero(),
                                dx_b.as_mut_ptr(), spatial as isize, 1,
                            );
                        }
                    } else {
                        unsafe {
                            F::gemm(
                                col_rows, d.cout, spatial,
                                F::one(),
                                ws.as_ptr(), 1, col_rows as isize,
                                g_b.as_ptr(), spatial as isize, 1,
                                F::zero(),
                                dcol.as_mut_ptr(), spatial as isize, 1,
                            );
                        }
                        col2im(&dcol, &d, dx_b);
                    }
                }
                if !dcol.is_empty() {
                    super::give_back(dcol);
                }
            });
        sink.accumulate(
            self.x,
            ArrayD::from_shape_vec(IxDyn(&[d.batch, d.cin, d.h, d.w]), dx).unwrap(),
        );

        drop(_sp);
        let _sp = super::prof::span("conv_bwd_dw");
        let halves: Vec<Vec<F>> = [(0, d.batch.div_ceil(2)), (d.batch.div_ceil(2), d.batch)]
            .into_par_iter()
            .map(|(b0, b1)| {
                let mut dw = vec![F::zero(); d.cout * col_rows];
                let mut col = if d.is_pointwise() {
                    Vec::new()
                } else {
                    super::take_uninit::<F>(col_rows * spatial)
                };
                for bi in b0..b1 {
                    let x_b = &xs[bi * img_in..(bi + 1) * img_in];
                    let g_b = &g[bi * img_out..(bi + 1) * img_out];
                    let col_ptr = if d.is_pointwise() {
                        x_b.as_ptr()
                    } else {
                        let _si = super::prof::span("conv_dw_im2col");
                        im2col(x_b, &d, &mut col);
                        col.as_ptr()
                    };
                    let _sg = super::prof::span("conv_dw_gemm");
                    unsafe {
                        F::gemm(
                            d.cout, spatial, col_rows,
                            F::one(),
                            g_b.as_ptr(), spatial as isize, 1,
                            col_ptr, 1, spatial as isize,
                            F::one(),
                            dw.as_mut_ptr(), col_rows as isize, 1,
                        );
                    }
                }
                if !col.is_empty() {
                    super::give_back(col);
                }
                dw
            })
            .collect();
        let mut dw = halves[0].clone();
        for (a, b) in dw.iter_mut().zip(&halves[1]) {
            *a += *b;
        }
        sink.accumulate(
            self.w,
            ArrayD::from_shape_vec(IxDyn(&[d.cout, d.cin, d.kh, d.kw]), dw).unwrap(),
        );

        drop(_sp);
        let _sp = super::prof::span("conv_bwd_db");
        if let Some(b) = self.b {
            let mut db = vec![F::zero(); d.cout];
            for bi in 0..d.batch {
                for (c, db_c) in db.iter_mut().enumerate() {
                    let seg = &g[bi * img_out + c * spatial..bi * img_out + (c + 1) * spatial];
                    for &v in seg {
                        *db_c += v;
                    }
                }
            }
            sink.accumulate(b, ArrayD::from_shape_vec(IxDyn(&[d.cout]), db).unwrap());
        }
    }
}

/// 2-D convolution over `(B, Cin, H, W)` with weight `(Cout, Cin, kh, kw)`.
pub fn conv2d<F: Elem>(
    tape: &Tape<F>,
    x: Var,
    w: Var,
    b: Option<Var>,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Var {
    let x_val = tape.value(x);
    let w_val = tape.value(w);
    let xs_shape = x_val.shape();
    let ws_shape = w_val.shape();
    assert_eq!(xs_shape.len(), 4, "conv input must be (B,C,H,W)");
    assert_eq!(ws_shape.len(), 4, "conv weight must be (Cout,Cin,kh,kw)");
    assert_eq!(xs_shape[1], ws_shape[1], "conv channel mismatch");
    let d = ConvDims {
        batch: xs_shape[0],
        cin: xs_shape[1],
        h: xs_shape[2],
        w: xs_shape[3],
        cout: ws_shape[0],
        kh: ws_shape[2],
        kw: ws_shape[3],
        sh: stride.0,
        sw: stride.1,
        ph: pad.0,
        pw: pad.1,
        hout: out_extent(xs_shape[2], ws_shape[2], stride.0, pad.0),
        wout: out_extent(xs_shape[3], ws_shape[3], stride.1, pad.1),
    };
    let spatial = d.spatial_out();
    let col_rows = d.col_rows();
    let img_in = d.cin * d.h * d.w;
    let img_out = d.cout * spatial;

    let xs = x_val.as_slice().expect("contiguous x");
    let ws = w_val.as_slice().expect("contiguous w");
    let b_val = b.map(|bv| tape.value(bv));
    let bias: Option<&[F]> = b_val
        .as_deref()
        .map(|a| a.as_slice().expect("contiguous bias"));

    // One scratch column buffer per thread chunk, reused across its images.
    let chunk_imgs = d.batch.div_ceil(rayon::current_num_threads()).max(1);
    let _sp = super::prof::span("conv_fwd");
    let mut out = super::take_uninit::<F>(d.batch * img_out);
    out.par_chunks_mut(chunk_imgs * img_out)
        .zip(xs.par_chunks(chunk_imgs * img_in))
        .for_each(|(out_chunk, x_chunk)| {
            let mut col_buf = if d.is_pointwise() {
                Vec::new()
            } else {
                super::take_uninit::<F>(col_rows * spatial)
            };
            for (out_b, x_b) in out_chunk
                .chunks_mut(img_out)
                .zip(x_chunk.chunks(img_in))
            {
                let col_ptr = if d.is_pointwise() {
                    x_b.as_ptr()
                } else {
                    let _si = super::prof::span("conv_fwd_im2col");
                    im2col(x_b, &d, &mut col_buf);
                    col_buf.as_ptr()
                };
                {
                    let _sg = super::prof::span("conv_fwd_gemm");
                    unsafe {
                        F::gemm(
                            d.cout, col_rows, spatial,
                            F::one(),
                            ws.as_ptr(), col_rows as isize, 1,
                            col_ptr, spatial as isize, 1,
                            F::zero(),
                            out_b.as_mut_ptr(), spatial as isize, 1,
                        );
                    }
                }
                if let Some(bs) = bias {
                    for (c, &bias_c) in bs.iter().enumerate() {
                        for o in &mut out_b[c * spatial..(c + 1) * spatial] {
                            *o += bias_c;
                        }
                    }
                }
            }
            if !col_buf.is_empty() {
                super::give_back(col_buf);
            }
        });

    let out = ArrayD::from_shape_vec(IxDyn(&[d.batch, d.cout, d.hout, d.wout]), out).unwrap();
    tape.push(
        out,
        NodeKind::Op(Box::new(Conv2dOp {
            x,
            w,
            b,
            x_val,
            w_val,
            dims: d,
        })),
    )
}

// ---------------------------------------------------------------------------
// pooling

struct MaxPool2dOp {
    x: Var,
    in_shape: Vec<usize>,
    /// Flat input index (within one image) chosen for each output element.
    argmax: Vec<u32>,
}

impl<F: Elem> BackwardOp<F> for MaxPool2dOp {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let batch = self.in_shape[0];
        let img_in: usize = self.in_shape[1..].iter().product();
        let img_out = grad.len() / batch;
        let _sp = super::prof::span("maxpool_bwd");
        let g = grad.as_slice().expect("contiguous grad");
        let mut dx = super::take_zeroed::<F>(batch * img_in);
        dx.par_chunks_mut(img_in)
            .enumerate()
            .for_each(|(bi, dx_b)| {
                let g_b = &g[bi * img_out..(bi + 1) * img_out];
                let arg_b = &self.argmax[bi * img_out..(bi + 1) * img_out];
                for (&a, &gv) in arg_b.iter().zip(g_b) {
                    dx_b[a as usize] += gv;
                }
            });
        sink.accumulate(
            self.x,
            ArrayD::from_shape_vec(IxDyn(&self.in_shape), dx).unwrap(),
        );
    }
}

/// Max pooling with padding (padded cells never win).
pub fn max_pool2d<F: Elem>(
    tape: &Tape<F>,
    x: Var,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Var {
    let x_val = tape.value(x);
    let shape = x_val.shape().to_vec();
    let (batch, chans, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let hout = out_extent(h, kernel, stride, pad);
    let wout = out_extent(w, kernel, stride, pad);
    let img_in = chans * h * w;
    let img_out = chans * hout * wout;
    let xs = x_val.as_slice().expect("contiguous x");

    // Interior outputs (full window inside the image) take a tight unchecked
    // path; only the border columns/rows test bounds.
    let ox_lo = pad.div_ceil(stride);
    let ox_hi = if w + pad >= kernel {
        ((w + pad - kernel) / stride + 1).min(wout)
    } else {
        0
    };

    let _sp = super::prof::span("maxpool_fwd");
    let mut out = super::take_uninit::<F>(batch * img_out);
    let mut argmax = vec![0u32; batch * img_out];
    out.par_chunks_mut(img_out)
        .zip(argmax.par_chunks_mut(img_out))
        .zip(xs.par_chunks(img_in))
        .for_each(|((out_b, arg_b), x_b)| {
            let mut bordered = |c: usize, oy: usize, ox: usize, x_chan: &[F], out_b: &mut [F], arg_b: &mut [u32]| {
                let mut best = F::neg_infinity();
                let mut best_idx = 0usize;
                for ki in 0..kernel {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kj in 0..kernel {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let idx = iy as usize * w + ix as usize;
                        let v = x_chan[idx];
                        if v > best {
                            best = v;
                            best_idx = c * h * w + idx;
                        }
                    }
                }
                let o = (c * hout + oy) * wout + ox;
                out_b[o] = best;
                arg_b[o] = best_idx as u32;
            };
            for c in 0..chans {
                let x_chan = &x_b[c * h * w..(c + 1) * h * w];
                for oy in 0..hout {
                    let iy0 = (oy * stride) as isize - pad as isize;
                    let full_rows = iy0 >= 0 && iy0 + kernel as isize <= h as isize;
                    if !full_rows || ox_lo >= ox_hi {
                        for ox in 0..wout {
                            bordered(c, oy, ox, x_chan, out_b, arg_b);
                        }
                        continue;
                    }
                    for ox in 0..ox_lo.min(wout) {
                        bordered(c, oy, ox, x_chan, out_b, arg_b);
                    }
                    let row_out = (c * hout + oy) * wout;
                    let iy0 = iy0 as usize;
                    for ox in ox_lo..ox_hi {
                        let ix0 = ox * stride - pad; // ox*stride >= pad in the interior
                        let mut best = F::neg_infinity();
                        let mut best_idx = 0usize;
                        for ki in 0..kernel {
                            let base = (iy0 + ki) * w + ix0;
                            // SAFETY: full_rows and the interior column range
                            // guarantee base..base+kernel is inside x_chan.
                            let row = unsafe { x_chan.get_unchecked(base..base + kernel) };
                            for (kj, &v) in row.iter().enumerate() {
                                if v > best {
                                    best = v;
                                    best_idx = base + kj;
                                }
                            }
                        }
                        out_b[row_out + ox] = best;
                        arg_b[row_out + ox] = (c * h * w + best_idx) as u32;
                    }
                    for ox in ox_hi..wout {
                        bordered(c, oy, ox, x_chan, out_b, arg_b);
                    }
                }
            }
        });

    let out = ArrayD::from_shape_vec(IxDyn(&[batch, chans, hout, wout]), out).unwrap();
    tape.push(
        out,
        NodeKind::Op(Box::new(MaxPool2dOp {
            x,
            in_shape: shape,
            argmax,
        })),
    )
}

struct AvgPool2dOp {
    x: Var,
    in_shape: Vec<usize>,
    kernel: usize,
    stride: usize,
}

impl<F: Elem> BackwardOp<F> for AvgPool2dOp {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let (batch, chans, h, w) = (
            self.in_shape[0],
            self.in_shape[1],
            self.in_shape[2],
            self.in_shape[3],
        );
        let (hout, wout) = (grad.shape()[2], grad.shape()[3]);
        let inv = F::one() / F::from_f64((self.kernel * self.kernel) as f64);
        let g = grad.as_slice().expect("contiguous grad");
        let img_in = chans * h * w;
        let img_out = chans * hout * wout;
        let mut dx = super::take_zeroed::<F>(batch * img_in);
        dx.par_chunks_mut(img_in)
            .enumerate()
            .for_each(|(bi, dx_b)| {
                let g_b = &g[bi * img_out..(bi + 1) * img_out];
                for c in 0..chans {
                    for oy in 0..hout {
                        for ox in 0..wout {
                            let gv = g_b[(c * hout + oy) * wout + ox] * inv;
                            for ki in 0..self.kernel {
                                let iy = oy * self.stride + ki;
                                for kj in 0..self.kernel {
                                    let ix = ox * self.stride + kj;
                                    dx_b[(c * h + iy) * w + ix] += gv;
                                }
                            }
                        }
                    }
                }
            });
        sink.accumulate(
            self.x,
            ArrayD::from_shape_vec(IxDyn(&self.in_shape), dx).unwrap(),
        );
    }
}

/// Average pooling without padding (used by dense-net transitions).
pub fn avg_pool2d<F: Elem>(tape: &Tape<F>, x: Var, kernel: usize, stride: usize) -> Var {
    let x_val = tape.value(x);
    let shape = x_val.shape().to_vec();
    let (batch, chans, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let hout = out_extent(h, kernel, stride, 0);
    let wout = out_extent(w, kernel, stride, 0);
    let inv = F::one() / F::from_f64((kernel * kernel) as f64);
    let xs = x_val.as_slice().expect("contiguous x");
    let img_in = chans * h * w;
    let img_out = chans * hout * wout;

    let mut out = super::take_uninit::<F>(batch * img_out);
    out.par_chunks_mut(img_out)
        .zip(xs.par_chunks(img_in))
        .for_each(|(out_b, x_b)| {
            for c in 0..chans {
                for oy in 0..hout {
                    for ox in 0..wout {
                        let mut acc = F::zero();
                        for ki in 0..kernel {
                            let iy = oy * stride + ki;
                            for kj in 0..kernel {
                                acc += x_b[(c * h + iy) * w + ox * stride + kj];
                            }
                        }
                        out_b[(c * hout + oy) * wout + ox] = acc * inv;
                    }
                }
            }
        });

    let out = ArrayD::from_shape_vec(IxDyn(&[batch, chans, hout, wout]), out).unwrap();
    tape.push(
        out,
        NodeKind::Op(Box::new(AvgPool2dOp {
            x,
            in_shape: shape,
            kernel,
            stride,
        })),
    )
}

struct GlobalAvgPoolOp {
    x: Var,
    in_shape: Vec<usize>,
}

impl<F: Elem> BackwardOp<F> for GlobalAvgPoolOp {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let (h, w) = (self.in_shape[2], self.in_shape[3]);
        let inv = F::one() / F::from_f64((h * w) as f64);
        let g = grad
            .clone()
            .into_shape_with_order(IxDyn(&[self.in_shape[0], self.in_shape[1], 1, 1]))
            .unwrap();
        let dx = g
            .broadcast(IxDyn(&self.in_shape))
            .unwrap()
            .mapv(|v| v * inv);
        sink.accumulate(self.x, dx);
    }
}

/// Spatial mean: `(B, C, H, W) → (B, C)`.
pub fn global_avg_pool<F: Elem>(tape: &Tape<F>, x: Var) -> Var {
    let x_val = tape.value(x);
    let shape = x_val.shape().to_vec();
    let out = x_val
        .sum_axis(Axis(3))
        .sum_axis(Axis(2))
        .mapv(|v| v / F::from_f64((shape[2] * shape[3]) as f64));
    tape.push(
        out.into_dyn(),
        NodeKind::Op(Box::new(GlobalAvgPoolOp { x, in_shape: shape })),
    )
}
