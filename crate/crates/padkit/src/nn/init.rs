//! Seeded weight initialization.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Elem;

/// Kaiming-normal standard deviation for ReLU fan-out mode.
pub fn kaiming_normal_std(fan_out: usize) -> f64 {
    (2.0 / fan_out as f64).sqrt()
}

/// Draws a tensor of normal samples with the given std.
pub fn normal_init<F: Elem>(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> ArrayD<F> {
    let dist = Normal::new(0.0f64, std).expect("valid std");
    let n: usize = shape.iter().product();
    let data: Vec<F> = (0..n).map(|_| F::from_f64(dist.sample(rng))).collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
}

/// Uniform in `[-bound, bound]`.
pub fn uniform_init<F: Elem>(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> ArrayD<F> {
    let n: usize = shape.iter().product();
    let data: Vec<F> = (0..n)
        .map(|_| F::from_f64(rng.random_range(-bound..=bound)))
        .collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
}

/// Convenience initializer carrying the rng.
pub struct Initializer {
    pub rng: ChaCha8Rng,
}

impl Initializer {
    pub fn from_seed(seed: u64) -> Self {
        use rand::SeedableRng;
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Conv weight `(Cout, Cin, kh, kw)`, Kaiming-normal fan-out.
    pub fn conv_weight<F: Elem>(&mut self, cout: usize, cin: usize, kh: usize, kw: usize) -> ArrayD<F> {
        let std = kaiming_normal_std(cout * kh * kw);
        normal_init(&mut self.rng, &[cout, cin, kh, kw], std)
    }

    /// Dense weight `(Out, In)`, small normal.
    pub fn linear_weight<F: Elem>(&mut self, out_dim: usize, in_dim: usize) -> ArrayD<F> {
        normal_init(&mut self.rng, &[out_dim, in_dim], 0.01)
    }

    pub fn zeros<F: Elem>(&mut self, shape: &[usize]) -> ArrayD<F> {
        ArrayD::zeros(IxDyn(shape))
    }

    pub fn ones<F: Elem>(&mut self, shape: &[usize]) -> ArrayD<F> {
        ArrayD::from_elem(IxDyn(shape), F::one())
    }
}
