//! Recycling allocator for tensor storage.
//!
//! Training allocates the same large buffers every step; letting them go
//! back to the OS forces hundreds of thousands of page faults per step.
//! Dropped tapes return their sole-owner buffers here and the operators
//! take them back, warm, on the next step. Contents of a taken buffer are
//! unspecified: callers either overwrite every element or ask for zeroed
//! storage.

use std::collections::HashMap;
use std::sync::{LazyLock, Mutex};

/// Cap on pooled storage per element type (in elements). Beyond this,
/// returned buffers are simply freed.
const MAX_POOLED_ELEMS: usize = 640 * 1024 * 1024; // 2.5 GB of f32

pub struct BufferPool<F> {
    slots: LazyLock<Mutex<PoolInner<F>>>,
}

struct PoolInner<F> {
    by_len: HashMap<usize, Vec<Vec<F>>>,
    total: usize,
}

impl<F: Send + 'static> BufferPool<F> {
    pub const fn new() -> Self {
        Self {
            slots: LazyLock::new(|| {
                Mutex::new(PoolInner {
                    by_len: HashMap::new(),
                    total: 0,
                })
            }),
        }
    }

    /// A buffer of exactly `len` elements with unspecified contents.
    pub fn take(&self, len: usize) -> Option<Vec<F>> {
        let mut inner = self.slots.lock().expect("pool lock");
        let v = inner.by_len.get_mut(&len)?.pop()?;
        inner.total -= len;
        Some(v)
    }

    pub fn give(&self, v: Vec<F>) {
        let len = v.len();
        if len < 4096 {
            return; // not worth tracking
        }
        let mut inner = self.slots.lock().expect("pool lock");
        if inner.total + len > MAX_POOLED_ELEMS {
            return;
        }
        inner.total += len;
        inner.by_len.entry(len).or_default().push(v);
    }
}

static F32_POOL: BufferPool<f32> = BufferPool::new();
static F64_POOL: BufferPool<f64> = BufferPool::new();

pub trait Pooled: Sized + Send + 'static {
    fn pool() -> &'static BufferPool<Self>;
}

impl Pooled for f32 {
    fn pool() -> &'static BufferPool<f32> {
        &F32_POOL
    }
}

impl Pooled for f64 {
    fn pool() -> &'static BufferPool<f64> {
        &F64_POOL
    }
}

/// Buffer of `len` elements with unspecified contents (pool or fresh).
pub fn take_uninit<F: Pooled + Copy + Default>(len: usize) -> Vec<F> {
    match F::pool().take(len) {
        Some(v) => v,
        None => vec![F::default(); len],
    }
}

/// Buffer of `len` zeroed elements.
pub fn take_zeroed<F: Pooled + Copy + Default + num_traits::Zero>(len: usize) -> Vec<F> {
    match F::pool().take(len) {
        Some(mut v) => {
            v.fill(F::zero());
            v
        }
        None => vec![F::zero(); len],
    }
}

pub fn give_back<F: Pooled>(v: Vec<F>) {
    F::pool().give(v);
}
