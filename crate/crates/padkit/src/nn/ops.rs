//! Differentiable tensor operations.
//!
//! Binary operations broadcast numpy-style (shapes aligned from the right);
//! their backward reduces gradient contributions back over the broadcast
//! axes. All operations allocate their output; tapes are short-lived.

use std::rc::Rc;

use ndarray::{ArrayD, Axis, IxDyn, Slice};

use super::{BackwardOp, Elem, GradSink, Tape, Var};

/// Broadcast shape of two shapes, aligned from the right.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let ndim = a.len().max(b.len());
    let mut out = vec![0usize; ndim];
    for i in 0..ndim {
        let da = if i < ndim - a.len() { 1 } else { a[i - (ndim - a.len())] };
        let db = if i < ndim - b.len() { 1 } else { b[i - (ndim - b.len())] };
        assert!(
            da == db || da == 1 || db == 1,
            "incompatible broadcast shapes {a:?} vs {b:?}"
        );
        out[i] = da.max(db);
    }
    out
}

/// Reduce a gradient of broadcast shape back to `target` shape.
fn unbroadcast<F: Elem>(mut g: ArrayD<F>, target: &[usize]) -> ArrayD<F> {
    while g.ndim() > target.len() {
        g = g.sum_axis(Axis(0));
    }
    for d in 0..target.len() {
        if target[d] == 1 && g.shape()[d] != 1 {
            g = g.sum_axis(Axis(d)).insert_axis(Axis(d));
        }
    }
    g
}

fn broadcast_to<F: Elem>(a: &ArrayD<F>, shape: &[usize]) -> ArrayD<F> {
    a.broadcast(IxDyn(shape))
        .unwrap_or_else(|| panic!("cannot broadcast {:?} to {:?}", a.shape(), shape))
        .to_owned()
}

/// Pooled deep copy of a contiguous tensor.
fn clone_pooled<F: Elem>(a: &ArrayD<F>) -> ArrayD<F> {
    match a.as_slice() {
        Some(src) => {
            let mut out = super::take_uninit::<F>(src.len());
            out.copy_from_slice(src);
            ArrayD::from_shape_vec(a.raw_dim(), out).unwrap()
        }
        None => a.clone(),
    }
}

/// Pooled elementwise map over a contiguous tensor.
fn unary_pooled<F: Elem>(a: &ArrayD<F>, f: impl Fn(F) -> F) -> ArrayD<F> {
    let _sp = super::prof::span("unary_pooled");
    match a.as_slice() {
        Some(src) => {
            let mut out = super::take_uninit::<F>(src.len());
            for (o, &v) in out.iter_mut().zip(src) {
                *o = f(v);
            }
            ArrayD::from_shape_vec(a.raw_dim(), out).unwrap()
        }
        None => a.mapv(f),
    }
}

/// Pooled elementwise combination of two same-shape contiguous tensors.
fn zip_pooled<F: Elem>(a: &ArrayD<F>, b: &ArrayD<F>, f: impl Fn(F, F) -> F) -> Option<ArrayD<F>> {
    let _sp = super::prof::span("zip_pooled");
    if a.shape() != b.shape() {
        return None;
    }
    let (sa, sb) = (a.as_slice()?, b.as_slice()?);
    let mut out = super::take_uninit::<F>(sa.len());
    for ((o, &x), &y) in out.iter_mut().zip(sa).zip(sb) {
        *o = f(x, y);
    }
    Some(ArrayD::from_shape_vec(a.raw_dim(), out).unwrap())
}

// ---------------------------------------------------------------------------
// binary broadcast ops

#[derive(Clone, Copy)]
enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
}

struct BinOp<F: Elem> {
    kind: BinKind,
    a: Var,
    b: Var,
    a_val: Rc<ArrayD<F>>,
    b_val: Rc<ArrayD<F>>,
}

impl<F: Elem> BackwardOp<F> for BinOp<F> {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let _sp = super::prof::span("binop_bwd");
        let (ga, gb) = match self.kind {
            BinKind::Add => (clone_pooled(grad), clone_pooled(grad)),
            BinKind::Sub => (clone_pooled(grad), unary_pooled(grad, |v| -v)),
            BinKind::Mul => {
                let ga = zip_pooled(grad, &self.b_val, |g, b| g * b)
                    .unwrap_or_else(|| grad * &broadcast_to(&self.b_val, grad.shape()));
                let gb = zip_pooled(grad, &self.a_val, |g, a| g * a)
                    .unwrap_or_else(|| grad * &broadcast_to(&self.a_val, grad.shape()));
                (ga, gb)
            }
            BinKind::Div => {
                let ga = zip_pooled(grad, &self.b_val, |g, b| g / b)
                    .unwrap_or_else(|| grad / &broadcast_to(&self.b_val, grad.shape()));
                let gb = match (grad.as_slice(), self.a_val.as_slice(), self.b_val.as_slice()) {
                    (Some(g), Some(a), Some(b))
                        if self.a_val.shape() == grad.shape()
                            && self.b_val.shape() == grad.shape() =>
                    {
                        let mut out = super::take_uninit::<F>(g.len());
                        for (((o, &gi), &ai), &bi) in
                            out.iter_mut().zip(g).zip(a).zip(b)
                        {
                            *o = -(gi * ai) / (bi * bi);
                        }
                        ArrayD::from_shape_vec(grad.raw_dim(), out).unwrap()
                    }
                    _ => {
                        let bb = broadcast_to(&self.b_val, grad.shape());
                        let ab = broadcast_to(&self.a_val, grad.shape());
                        -(grad * &ab) / (&bb * &bb)
                    }
                };
                (ga, gb)
            }
        };
        sink.accumulate(self.a, unbroadcast(ga, self.a_val.shape()));
        sink.accumulate(self.b, unbroadcast(gb, self.b_val.shape()));
    }
}

fn binary<F: Elem>(tape: &Tape<F>, kind: BinKind, a: Var, b: Var) -> Var {
    let _sp = super::prof::span("binop_fwd");
    let av = tape.value(a);
    let bv = tape.value(b);
    let fast = match kind {
        BinKind::Add => zip_pooled(&av, &bv, |x, y| x + y),
        BinKind::Sub => zip_pooled(&av, &bv, |x, y| x - y),
        BinKind::Mul => zip_pooled(&av, &bv, |x, y| x * y),
        BinKind::Div => zip_pooled(&av, &bv, |x, y| x / y),
    };
    let out = match fast {
        Some(out) => out,
        None => {
            let shape = broadcast_shape(av.shape(), bv.shape());
            let ab = av.broadcast(IxDyn(&shape)).expect("lhs broadcast");
            let bb = bv.broadcast(IxDyn(&shape)).expect("rhs broadcast");
            match kind {
                BinKind::Add => &ab + &bb,
                BinKind::Sub => &ab - &bb,
                BinKind::Mul => &ab * &bb,
                BinKind::Div => &ab / &bb,
            }
        }
    };
    tape.push(
        out,
        super::NodeKind::Op(Box::new(BinOp {
            kind,
            a,
            b,
            a_val: av,
            b_val: bv,
        })),
    )
}

pub fn add<F: Elem>(tape: &Tape<F>, a: Var, b: Var) -> Var {
    binary(tape, BinKind::Add, a, b)
}
pub fn sub<F: Elem>(tape: &Tape<F>, a: Var, b: Var) -> Var {
    binary(tape, BinKind::Sub, a, b)
}
pub fn mul<F: Elem>(tape: &Tape<F>, a: Var, b: Var) -> Var {
    binary(tape, BinKind::Mul, a, b)
}
pub fn div<F: Elem>(tape: &Tape<F>, a: Var, b: Var) -> Var {
    binary(tape, BinKind::Div, a, b)
}

// ---------------------------------------------------------------------------
// scalar and unary ops

struct ScaleOp {
    a: Var,
    c: f64,
}

impl<F: Elem> BackwardOp<F> for ScaleOp {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let c = F::from_f64(self.c);
        sink.accumulate(self.a, unary_pooled(grad, |g| g * c));
    }
}

/// `c · a`
pub fn scale<F: Elem>(tape: &Tape<F>, a: Var, c: f64) -> Var {
    let cf = F::from_f64(c);
    let out = unary_pooled(&tape.value(a), |v| v * cf);
    tape.push(out, super::NodeKind::Op(Box::new(ScaleOp { a, c })))
}

struct AddScalarOp {
    a: Var,
}

impl<F: Elem> BackwardOp<F> for AddScalarOp {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        sink.accumulate(self.a, clone_pooled(grad));
    }
}

/// `a + c`
pub fn add_scalar<F: Elem>(tape: &Tape<F>, a: Var, c: f64) -> Var {
    let cf = F::from_f64(c);
    let out = unary_pooled(&tape.value(a), |v| v + cf);
    tape.push(out, super::NodeKind::Op(Box::new(AddScalarOp { a })))
}

/// `c − a`
pub fn rsub_scalar<F: Elem>(tape: &Tape<F>, a: Var, c: f64) -> Var {
    add_scalar(tape, scale(tape, a, -1.0), c)
}

struct ReluOp<F: Elem> {
    a: Var,
    out: Rc<ArrayD<F>>,
}

impl<F: Elem> BackwardOp<F> for ReluOp<F> {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let g = zip_pooled(grad, &self.out, |g, o| if o > F::zero() { g } else { F::zero() })
            .expect("relu shapes match");
        sink.accumulate(self.a, g);
    }
}

pub fn relu<F: Elem>(tape: &Tape<F>, a: Var) -> Var {
    let out = Rc::new(unary_pooled(&tape.value(a), |v| {
        if v > F::zero() {
            v
        } else {
            F::zero()
        }
    }));
    let op = ReluOp {
        a,
        out: Rc::clone(&out),
    };
    tape.push_rc(out, super::NodeKind::Op(Box::new(op)))
}

struct SigmoidOp<F: Elem> {
    a: Var,
    out: Rc<ArrayD<F>>,
}

impl<F: Elem> BackwardOp<F> for SigmoidOp<F> {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let g = zip_pooled(grad, &self.out, |g, s| g * s * (F::one() - s))
            .expect("sigmoid shapes match");
        sink.accumulate(self.a, g);
    }
}

pub fn sigmoid<F: Elem>(tape: &Tape<F>, a: Var) -> Var {
    let out = Rc::new(unary_pooled(&tape.value(a), stable_sigmoid));
    let op = SigmoidOp {
        a,
        out: Rc::clone(&out),
    };
    tape.push_rc(out, super::NodeKind::Op(Box::new(op)))
}

fn stable_sigmoid<F: Elem>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

struct SqrtOp<F: Elem> {
    a: Var,
    out: Rc<ArrayD<F>>,
}

impl<F: Elem> BackwardOp<F> for SqrtOp<F> {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let half = F::from_f64(0.5);
        let g = zip_pooled(grad, &self.out, |g, s| g * half / s).expect("sqrt shapes match");
        sink.accumulate(self.a, g);
    }
}

pub fn sqrt<F: Elem>(tape: &Tape<F>, a: Var) -> Var {
    let out = Rc::new(unary_pooled(&tape.value(a), |v| v.sqrt()));
    let op = SqrtOp {
        a,
        out: Rc::clone(&out),
    };
    tape.push_rc(out, super::NodeKind::Op(Box::new(op)))
}

struct SquareOp<F: Elem> {
    a: Var,
    a_val: Rc<ArrayD<F>>,
}

impl<F: Elem> BackwardOp<F> for SquareOp<F> {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let two = F::from_f64(2.0);
        let g = zip_pooled(grad, &self.a_val, |g, a| g * two * a).expect("square shapes match");
        sink.accumulate(self.a, g);
    }
}

pub fn square<F: Elem>(tape: &Tape<F>, a: Var) -> Var {
    let a_val = tape.value(a);
    let out = unary_pooled(&a_val, |v| v * v);
    tape.push(out, super::NodeKind::Op(Box::new(SquareOp { a, a_val })))
}

struct LnOp<F: Elem> {
    a: Var,
    a_val: Rc<ArrayD<F>>,
}

impl<F: Elem> BackwardOp<F> for LnOp<F> {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let g = zip_pooled(grad, &self.a_val, |g, a| g / a).expect("ln shapes match");
        sink.accumulate(self.a, g);
    }
}

pub fn ln<F: Elem>(tape: &Tape<F>, a: Var) -> Var {
    let a_val = tape.value(a);
    let out = unary_pooled(&a_val, |v| v.ln());
    tape.push(out, super::NodeKind::Op(Box::new(LnOp { a, a_val })))
}

struct ClampOp<F: Elem> {
    a: Var,
    a_val: Rc<ArrayD<F>>,
    lo: F,
    hi: F,
}

impl<F: Elem> BackwardOp<F> for ClampOp<F> {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let (lo, hi) = (self.lo, self.hi);
        let g = zip_pooled(grad, &self.a_val, |g, a| {
            if a <= lo || a >= hi {
                F::zero()
            } else {
                g
            }
        })
        .expect("clamp shapes match");
        sink.accumulate(self.a, g);
    }
}

/// Clamp to `[lo, hi]`; gradient passes only strictly inside the interval.
pub fn clamp<F: Elem>(tape: &Tape<F>, a: Var, lo: f64, hi: f64) -> Var {
    let (lo, hi) = (F::from_f64(lo), F::from_f64(hi));
    let a_val = tape.value(a);
    let out = unary_pooled(&a_val, |v| v.max(lo).min(hi));
    tape.push(
        out,
        super::NodeKind::Op(Box::new(ClampOp { a, a_val, lo, hi })),
    )
}

// ---------------------------------------------------------------------------
// reductions

struct MeanAxesOp {
    a: Var,
    in_shape: Vec<usize>,
    axes: Vec<usize>,
    count: usize,
}

impl<F: Elem> BackwardOp<F> for MeanAxesOp {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let scale = F::one() / F::from_f64(self.count as f64);
        // Fast path: reduced axes form a trailing contiguous block.
        let trailing_block: usize = self.in_shape[self.in_shape.len() - self.axes.len()..]
            .iter()
            .product();
        let trailing = self.axes.iter().enumerate().all(|(i, &ax)| {
            ax == self.in_shape.len() - self.axes.len() + i
        });
        let g = match (trailing, grad.as_slice()) {
            (true, Some(gs)) => {
                let n: usize = self.in_shape.iter().product();
                let mut out = super::take_uninit::<F>(n);
                for (block, &gv) in out.chunks_mut(trailing_block).zip(gs) {
                    block.fill(gv * scale);
                }
                ArrayD::from_shape_vec(IxDyn(&self.in_shape), out).unwrap()
            }
            _ => broadcast_to(grad, &self.in_shape).mapv(|v| v * scale),
        };
        sink.accumulate(self.a, g);
    }
}

/// Mean over `axes`, keeping reduced dimensions as size 1.
pub fn mean_axes<F: Elem>(tape: &Tape<F>, a: Var, axes: &[usize]) -> Var {
    let a_val = tape.value(a);
    let in_shape = a_val.shape().to_vec();
    let mut count = 1usize;
    let mut out = (*a_val).clone();
    let mut sorted: Vec<usize> = axes.to_vec();
    sorted.sort_unstable();
    for &ax in sorted.iter().rev() {
        count *= in_shape[ax];
        out = out.sum_axis(Axis(ax)).insert_axis(Axis(ax));
    }
    out.mapv_inplace(|v| v / F::from_f64(count as f64));
    tape.push(
        out,
        super::NodeKind::Op(Box::new(MeanAxesOp {
            a,
            in_shape,
            axes: sorted,
            count,
        })),
    )
}

struct SumAllOp {
    a: Var,
    in_shape: Vec<usize>,
}

impl<F: Elem> BackwardOp<F> for SumAllOp {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let g = *grad.iter().next().expect("scalar grad");
        let n: usize = self.in_shape.iter().product();
        let mut out = super::take_uninit::<F>(n);
        out.fill(g);
        sink.accumulate(
            self.a,
            ArrayD::from_shape_vec(IxDyn(&self.in_shape), out).unwrap(),
        );
    }
}

/// Sum of all elements (0-d result).
pub fn sum_all<F: Elem>(tape: &Tape<F>, a: Var) -> Var {
    let a_val = tape.value(a);
    let out = ArrayD::from_elem(IxDyn(&[]), a_val.sum());
    tape.push(
        out,
        super::NodeKind::Op(Box::new(SumAllOp {
            a,
            in_shape: a_val.shape().to_vec(),
        })),
    )
}

/// Mean of all elements (0-d result).
pub fn mean_all<F: Elem>(tape: &Tape<F>, a: Var) -> Var {
    let n = tape.value(a).len();
    let s = sum_all(tape, a);
    scale(tape, s, 1.0 / n as f64)
}

// ---------------------------------------------------------------------------
// shaping

struct ReshapeOp {
    a: Var,
    in_shape: Vec<usize>,
}

impl<F: Elem> BackwardOp<F> for ReshapeOp {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let g = grad
            .clone()
            .into_shape_with_order(IxDyn(&self.in_shape))
            .expect("reshape grad");
        sink.accumulate(self.a, g);
    }
}

pub fn reshape<F: Elem>(tape: &Tape<F>, a: Var, shape: &[usize]) -> Var {
    let a_val = tape.value(a);
    let in_shape = a_val.shape().to_vec();
    let out = (*a_val)
        .clone()
        .into_shape_with_order(IxDyn(shape))
        .unwrap_or_else(|_| panic!("cannot reshape {:?} to {:?}", in_shape, shape));
    tape.push(
        out,
        super::NodeKind::Op(Box::new(ReshapeOp { a, in_shape })),
    )
}

struct ConcatOp {
    parts: Vec<(Var, usize)>,
    axis: usize,
}

impl<F: Elem> BackwardOp<F> for ConcatOp {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let mut offset = 0;
        for &(var, extent) in &self.parts {
            let g = grad
                .slice_axis(Axis(self.axis), Slice::from(offset..offset + extent))
                .to_owned();
            sink.accumulate(var, g);
            offset += extent;
        }
    }
}

/// Concatenate along `axis`.
pub fn concat<F: Elem>(tape: &Tape<F>, parts: &[Var], axis: usize) -> Var {
    let _sp = super::prof::span("concat_fwd");
    assert!(!parts.is_empty());
    let values: Vec<_> = parts.iter().map(|&v| tape.value(v)).collect();
    let views: Vec<_> = values.iter().map(|v| v.view()).collect();
    let out = ndarray::concatenate(Axis(axis), &views).expect("concat shapes");
    // concatenate along inner axes yields a non-standard layout; downstream
    // kernels require contiguous row-major buffers.
    let out = if out.is_standard_layout() {
        out
    } else {
        out.as_standard_layout().into_owned()
    };
    let extents = parts
        .iter()
        .zip(&values)
        .map(|(&v, val)| (v, val.shape()[axis]))
        .collect();
    tape.push(
        out,
        super::NodeKind::Op(Box::new(ConcatOp {
            parts: extents,
            axis,
        })),
    )
}

struct SliceBatchOp {
    a: Var,
    in_shape: Vec<usize>,
    start: usize,
    len: usize,
}

impl<F: Elem> BackwardOp<F> for SliceBatchOp {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let mut g = ArrayD::zeros(IxDyn(&self.in_shape));
        g.slice_axis_mut(Axis(0), Slice::from(self.start..self.start + self.len))
            .assign(grad);
        sink.accumulate(self.a, g);
    }
}

/// Slice `len` rows starting at `start` along the batch axis.
pub fn slice_batch<F: Elem>(tape: &Tape<F>, a: Var, start: usize, len: usize) -> Var {
    let a_val = tape.value(a);
    let out = a_val
        .slice_axis(Axis(0), Slice::from(start..start + len))
        .to_owned();
    tape.push(
        out,
        super::NodeKind::Op(Box::new(SliceBatchOp {
            a,
            in_shape: a_val.shape().to_vec(),
            start,
            len,
        })),
    )
}

// ---------------------------------------------------------------------------
// dense layer

struct LinearOp<F: Elem> {
    x: Var,
    w: Var,
    b: Option<Var>,
    x_val: Rc<ArrayD<F>>,
    w_val: Rc<ArrayD<F>>,
}

impl<F: Elem> BackwardOp<F> for LinearOp<F> {
    fn backward(&self, grad: &ArrayD<F>, sink: &mut GradSink<'_, F>) {
        let (batch, out_dim) = (grad.shape()[0], grad.shape()[1]);
        let in_dim = self.w_val.shape()[1];
        let g = grad.as_slice().expect("contiguous grad");
        let xs = self.x_val.as_slice().expect("contiguous x");
        let ws = self.w_val.as_slice().expect("contiguous w");

        // dx = g · w
        let mut dx = vec![F::zero(); batch * in_dim];
        // dw = gᵀ · x
        let mut dw = vec![F::zero(); out_dim * in_dim];
        unsafe {
            F::gemm(
                batch, out_dim, in_dim,
                F::one(),
                g.as_ptr(), out_dim as isize, 1,
                ws.as_ptr(), in_dim as isize, 1,
                F::zero(),
                dx.as_mut_ptr(), in_dim as isize, 1,
            );
            F::gemm(
                out_dim, batch, in_dim,
                F::one(),
                g.as_ptr(), 1, out_dim as isize,
                xs.as_ptr(), in_dim as isize, 1,
                F::zero(),
                dw.as_mut_ptr(), in_dim as isize, 1,
            );
        }
        sink.accumulate(
            self.x,
            ArrayD::from_shape_vec(IxDyn(&[batch, in_dim]), dx).unwrap(),
        );
        sink.accumulate(
            self.w,
            ArrayD::from_shape_vec(IxDyn(&[out_dim, in_dim]), dw).unwrap(),
        );
        if let Some(b) = self.b {
            sink.accumulate(b, grad.sum_axis(Axis(0)).into_dyn());
        }
    }
}

/// Fully connected layer: `x (B,D) · wᵀ (D,Out) + b`.
pub fn linear<F: Elem>(tape: &Tape<F>, x: Var, w: Var, b: Option<Var>) -> Var {
    let x_val = tape.value(x);
    let w_val = tape.value(w);
    assert_eq!(x_val.ndim(), 2, "linear input must be (B, D)");
    assert_eq!(w_val.ndim(), 2, "linear weight must be (Out, D)");
    let (batch, in_dim) = (x_val.shape()[0], x_val.shape()[1]);
    let out_dim = w_val.shape()[0];
    assert_eq!(w_val.shape()[1], in_dim, "linear dims");

    let xs = x_val.as_slice().expect("contiguous x");
    let ws = w_val.as_slice().expect("contiguous w");
    let mut out = vec![F::zero(); batch * out_dim];
    unsafe {
        F::gemm(
            batch, in_dim, out_dim,
            F::one(),
            xs.as_ptr(), in_dim as isize, 1,
            ws.as_ptr(), 1, in_dim as isize,
            F::zero(),
            out.as_mut_ptr(), out_dim as isize, 1,
        );
    }
    let mut out = ArrayD::from_shape_vec(IxDyn(&[batch, out_dim]), out).unwrap();
    if let Some(b) = b {
        let b_val = tape.value(b);
        let bs = b_val.as_slice().expect("contiguous bias");
        for mut row in out.rows_mut() {
            for (o, &bv) in row.iter_mut().zip(bs) {
                *o += bv;
            }
        }
    }
    tape.push(
        out,
        super::NodeKind::Op(Box::new(LinearOp {
            x,
            w,
            b,
            x_val,
            w_val,
        })),
    )
}
