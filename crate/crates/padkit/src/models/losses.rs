//! Binary cross-entropy losses, in scalar form (reference semantics) and as
//! tape operations for training.
//!
//! Scores are clamped to `[ε, 1−ε]` with ε = 1e-7 before the logarithms.

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::nn::{ops, Elem, Tape, Var};

use super::ModelOutput;

pub const PROB_EPSILON: f64 = 1e-7;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)
}

/// `−[y·log p + (1−y)·log(1−p)]` for a single prediction.
pub fn ce_loss(p: f64, y: f64) -> f64 {
    let p = clamp_prob(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Analytic `dL/dp` (zero outside the clamp interval).
pub fn ce_loss_grad(p: f64, y: f64) -> f64 {
    if p <= PROB_EPSILON || p >= 1.0 - PROB_EPSILON {
        return 0.0;
    }
    -y / p + (1.0 - y) / (1.0 - p)
}

/// Mean of [`ce_loss`] over a batch.
pub fn ce_loss_batch(probs: &[f64], targets: &[f64]) -> f64 {
    debug_assert_eq!(probs.len(), targets.len());
    probs
        .iter()
        .zip(targets)
        .map(|(&p, &y)| ce_loss(p, y))
        .sum::<f64>()
        / probs.len() as f64
}

/// Pixel-wise + binary combined loss for one sample: the ground-truth pixel
/// map is the constant map of value `y`, and the two terms are equally
/// weighted.
pub fn pixbis_loss(pixel_map: &ndarray::Array2<f64>, binary_score: f64, y: f64) -> Result<f64> {
    let side = super::pixbis::PIXEL_MAP_SIDE;
    if pixel_map.dim() != (side, side) {
        return Err(Error::Shape(format!(
            "pixel map must be {side}x{side}, got {:?}",
            pixel_map.dim()
        )));
    }
    let pixel_term =
        pixel_map.iter().map(|&p| ce_loss(p, y)).sum::<f64>() / pixel_map.len() as f64;
    Ok(pixel_term + ce_loss(binary_score, y))
}

/// Tape version of the batched BCE: probabilities against a constant target
/// tensor of the same shape, mean over all elements.
pub fn bce_graph<F: Elem>(tape: &Tape<F>, probs: Var, targets: ArrayD<F>) -> Var {
    let t = tape.input(targets);
    let p = ops::clamp(tape, probs, PROB_EPSILON, 1.0 - PROB_EPSILON);
    let pos = ops::mul(tape, t, ops::ln(tape, p));
    let neg = ops::mul(
        tape,
        ops::rsub_scalar(tape, t, 1.0),
        ops::ln(tape, ops::rsub_scalar(tape, p, 1.0)),
    );
    ops::scale(tape, ops::mean_all(tape, ops::add(tape, pos, neg)), -1.0)
}

/// The training loss for a forward pass: BCE on the binary probability,
/// plus (for pixbis outputs) the mean-over-pixels BCE against per-sample
/// constant maps.
pub fn training_loss<F: Elem>(tape: &Tape<F>, out: &ModelOutput, targets: &[f64]) -> Var {
    let batch = targets.len();
    let y: Vec<F> = targets.iter().map(|&t| F::from_f64(t)).collect();
    let binary_targets = ArrayD::from_shape_vec(IxDyn(&[batch, 1]), y.clone()).unwrap();
    let binary_term = bce_graph(tape, out.binary_prob, binary_targets);
    match out.pixel_map {
        None => binary_term,
        Some(map) => {
            let shape = tape.value(map).shape().to_vec();
            debug_assert_eq!(shape[0], batch);
            let n_px: usize = shape[1..].iter().product();
            let mut data = Vec::with_capacity(batch * n_px);
            for &t in &y {
                data.extend(std::iter::repeat_n(t, n_px));
            }
            let pixel_targets = ArrayD::from_shape_vec(IxDyn(&shape), data).unwrap();
            let pixel_term = bce_graph(tape, map, pixel_targets);
            ops::add(tape, pixel_term, binary_term)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_near_zero() {
        assert!(ce_loss(1.0 - PROB_EPSILON, 1.0) < 1e-6);
        assert!(ce_loss(PROB_EPSILON, 0.0) < 1e-6);
        // clamping keeps even the degenerate inputs finite
        assert!(ce_loss(1.0, 1.0).is_finite());
        assert!(ce_loss(0.0, 1.0).is_finite());
    }

    #[test]
    fn half_probability_is_ln_two() {
        assert!((ce_loss(0.5, 0.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((ce_loss(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn gradient_at_half_matches_analytic_and_finite_difference() {
        let g = ce_loss_grad(0.5, 1.0);
        assert!((g - (-2.0)).abs() < 1e-12);
        let h = 1e-6;
        let fd = (ce_loss(0.5 + h, 1.0) - ce_loss(0.5 - h, 1.0)) / (2.0 * h);
        assert!((g - fd).abs() / g.abs() < 1e-5);
    }

    #[test]
    fn gradients_match_finite_differences_on_random_inputs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p: f64 = rng.random_range(0.05..0.95);
            let y = if rng.random::<bool>() { 1.0 } else { 0.0 };
            let h = 1e-6;
            let fd = (ce_loss(p + h, y) - ce_loss(p - h, y)) / (2.0 * h);
            let g = ce_loss_grad(p, y);
            assert!((g - fd).abs() / g.abs().max(1e-8) < 1e-5, "p={p} y={y}");
        }
    }

    #[test]
    fn ce_loss_convex_in_p() {
        // second central difference is non-negative on a grid
        for y in [0.0, 1.0] {
            for i in 1..99 {
                let p = i as f64 / 100.0;
                let h = 1e-4;
                let second = ce_loss(p + h, y) - 2.0 * ce_loss(p, y) + ce_loss(p - h, y);
                assert!(second >= 0.0, "p={p} y={y}");
            }
        }
    }

    #[test]
    fn pixbis_perfect_is_near_zero() {
        let map = ndarray::Array2::from_elem((14, 14), 1.0 - PROB_EPSILON);
        let l = pixbis_loss(&map, 1.0 - PROB_EPSILON, 1.0).unwrap();
        assert!(l < 1e-5);
    }

    #[test]
    fn pixbis_all_half_is_two_ln_two() {
        let map = ndarray::Array2::from_elem((14, 14), 0.5);
        for y in [0.0, 1.0] {
            let l = pixbis_loss(&map, 0.5, y).unwrap();
            assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn pixbis_wrong_shape_rejected() {
        let map = ndarray::Array2::from_elem((7, 7), 0.5);
        assert!(pixbis_loss(&map, 0.5, 1.0).is_err());
    }

    #[test]
    fn pixbis_decomposes_to_binary_term_with_perfect_map() {
        let map = ndarray::Array2::from_elem((14, 14), 1.0 - PROB_EPSILON);
        for score in [0.2, 0.5, 0.9] {
            let combined = pixbis_loss(&map, score, 1.0).unwrap();
            let binary = ce_loss(score, 1.0);
            assert!((combined - binary).abs() < 1e-5, "score={score}");
        }
    }
}
