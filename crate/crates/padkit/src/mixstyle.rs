//! Feature-statistics mixing for synthetic→authentic domain adaptation.
//!
//! During training, per-channel feature statistics of source (synthetic)
//! samples are linearly mixed with statistics of paired target (authentic)
//! samples using Beta-distributed weights:
//!
//! ```text
//! γ = λ·σ(x_s) + (1−λ)·σ(x_a)
//! β = λ·μ(x_s) + (1−λ)·μ(x_a)
//! out = γ · (x_s − μ(x_s)) / σ(x_s) + β
//! ```
//!
//! Gradients flow through the source path (including `μ(x_s)`, `σ(x_s)`)
//! but are blocked through the target statistics: the target stream is
//! unlabeled and no loss ever reaches it. The layer is removed at inference.

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ops, Elem, Tape, Var};

/// Where a mixing layer sits inside a backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertionPoint {
    AfterResidualStage1,
    AfterResidualStage2,
    AfterDenseBlock1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixStyleConfig {
    /// Beta distribution shape: λ ~ Beta(alpha, alpha).
    pub alpha: f64,
    /// Probability that a forward pass applies the mixing at all.
    pub apply_probability: f64,
    /// Stabilizer inside the variance square root.
    pub epsilon: f64,
    /// Override of the architecture-derived insertion points; leave empty to
    /// use [`insertion_points`] of the model architecture.
    pub insertion_points: Vec<InsertionPoint>,
}

impl Default for MixStyleConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            apply_probability: 0.5,
            epsilon: 1e-6,
            insertion_points: Vec::new(),
        }
    }
}

impl MixStyleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 {
            return Err(Error::Config("mixstyle.alpha must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(Error::Config(
                "mixstyle.apply_probability must be in [0, 1]".into(),
            ));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("mixstyle.epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-sample per-channel feature statistics of a `(B, C, H, W)` map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats<F: Elem> {
    /// Spatial means, shape `(B, C)`.
    pub mu: Array2<F>,
    /// `sqrt(spatial variance + epsilon)`, shape `(B, C)`.
    pub sigma: Array2<F>,
}

/// Spatial mean and stabilized standard deviation per sample and channel.
pub fn channel_stats<F: Elem>(x: &ArrayD<F>, epsilon: f64) -> Result<FeatureStats<F>> {
    if x.ndim() != 4 {
        return Err(Error::Shape(format!(
            "channel_stats expects (B, C, H, W), got {:?}",
            x.shape()
        )));
    }
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    if h * w == 0 {
        return Err(Error::Shape("channel_stats: empty spatial extent".into()));
    }
    let n = F::from_f64((h * w) as f64);
    let eps = F::from_f64(epsilon);
    let xs = x.as_slice().expect("contiguous feature map");
    let mut mu = Array2::<F>::zeros((b, c));
    let mut sigma = Array2::<F>::zeros((b, c));
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * h * w;
            let seg = &xs[base..base + h * w];
            let mut sum = F::zero();
            for &v in seg {
                sum += v;
            }
            let mean = sum / n;
            let mut sq = F::zero();
            for &v in seg {
                let d = v - mean;
                sq += d * d;
            }
            mu[[bi, ci]] = mean;
            sigma[[bi, ci]] = (sq / n + eps).sqrt();
        }
    }
    Ok(FeatureStats { mu, sigma })
}

/// Mixed statistics: `γ = λ·σ_s + (1−λ)·σ_a`, `β = λ·μ_s + (1−λ)·μ_a`,
/// one λ per sample shared across channels. Target rows must already be
/// paired to source rows.
pub fn mix_statistics<F: Elem>(
    stats_s: &FeatureStats<F>,
    stats_a: &FeatureStats<F>,
    lambda: &Array1<F>,
) -> Result<(Array2<F>, Array2<F>)> {
    if stats_s.mu.dim() != stats_a.mu.dim() {
        return Err(Error::Shape(format!(
            "statistics shapes differ: {:?} vs {:?}",
            stats_s.mu.dim(),
            stats_a.mu.dim()
        )));
    }
    let (b, c) = stats_s.mu.dim();
    if lambda.len() != b {
        return Err(Error::Shape(format!(
            "lambda length {} does not match batch {b}",
            lambda.len()
        )));
    }
    let mut gamma = Array2::<F>::zeros((b, c));
    let mut beta = Array2::<F>::zeros((b, c));
    for bi in 0..b {
        let l = lambda[bi];
        let one_l = F::one() - l;
        for ci in 0..c {
            gamma[[bi, ci]] = l * stats_s.sigma[[bi, ci]] + one_l * stats_a.sigma[[bi, ci]];
            beta[[bi, ci]] = l * stats_s.mu[[bi, ci]] + one_l * stats_a.mu[[bi, ci]];
        }
    }
    Ok((gamma, beta))
}

/// The differentiable restyling core with explicit mixing weights and target
/// statistics (already paired to source rows).
///
/// Source statistics are recomputed on the tape so gradients reach `x_s`
/// through both the normalization and the mixed statistics; the target
/// statistics enter as constants.
pub fn mixstyle_restyle<F: Elem>(
    tape: &Tape<F>,
    x_s: Var,
    target_stats: &FeatureStats<F>,
    lambda: &Array1<F>,
    epsilon: f64,
) -> Var {
    let x_val = tape.value(x_s);
    let (b, c) = (x_val.shape()[0], x_val.shape()[1]);
    debug_assert_eq!(target_stats.mu.dim(), (b, c));

    let mu_s = ops::mean_axes(tape, x_s, &[2, 3]);
    let centered = ops::sub(tape, x_s, mu_s);
    let var_s = ops::mean_axes(tape, ops::square(tape, centered), &[2, 3]);
    let sigma_s = ops::sqrt(tape, ops::add_scalar(tape, var_s, epsilon));

    let to_bc11 = |a: &Array2<F>| {
        ArrayD::from_shape_vec(IxDyn(&[b, c, 1, 1]), a.iter().copied().collect()).unwrap()
    };
    let mu_a = tape.input(to_bc11(&target_stats.mu));
    let sigma_a = tape.input(to_bc11(&target_stats.sigma));

    let lam_vec: Vec<F> = lambda.iter().copied().collect();
    let lam = tape.input(ArrayD::from_shape_vec(IxDyn(&[b, 1, 1, 1]), lam_vec).unwrap());
    let one_lam = ops::rsub_scalar(tape, lam, 1.0);

    let gamma = ops::add(
        tape,
        ops::mul(tape, lam, sigma_s),
        ops::mul(tape, one_lam, sigma_a),
    );
    let beta = ops::add(
        tape,
        ops::mul(tape, lam, mu_s),
        ops::mul(tape, one_lam, mu_a),
    );

    let normalized = ops::div(tape, ops::sub(tape, x_s, mu_s), sigma_s);
    ops::add(tape, ops::mul(tape, gamma, normalized), beta)
}

/// Randomized behavior drawn for one forward pass (for replay in tests).
#[derive(Debug, Clone, PartialEq)]
pub struct MixDraw {
    pub applied: bool,
    /// Target row paired to each source row.
    pub pairing: Vec<usize>,
    pub lambda: Vec<f64>,
}

/// Architecture-specific default insertion points.
pub fn insertion_points(architecture: &str) -> Result<Vec<InsertionPoint>> {
    match architecture {
        "resnet18_binary" => Ok(vec![
            InsertionPoint::AfterResidualStage1,
            InsertionPoint::AfterResidualStage2,
        ]),
        "pixbis" => Ok(vec![InsertionPoint::AfterDenseBlock1]),
        other => Err(Error::Config(format!(
            "unknown architecture '{other}' (expected resnet18_binary|pixbis)"
        ))),
    }
}

/// Draws the application coin, the target pairing permutation (cycled when
/// the target half is smaller), and one λ ~ Beta(α, α) per source sample.
pub fn draw_mix(
    cfg: &MixStyleConfig,
    n_source: usize,
    n_target: usize,
    rng: &mut ChaCha8Rng,
) -> MixDraw {
    let applied = rng.random::<f64>() < cfg.apply_probability;
    if !applied {
        return MixDraw {
            applied,
            pairing: Vec::new(),
            lambda: Vec::new(),
        };
    }
    let mut perm: Vec<usize> = (0..n_target).collect();
    perm.shuffle(rng);
    let pairing = (0..n_source).map(|i| perm[i % n_target]).collect();
    let beta = Beta::new(cfg.alpha, cfg.alpha).expect("validated alpha");
    let lambda = (0..n_source).map(|_| beta.sample(rng)).collect();
    MixDraw {
        applied,
        pairing,
        lambda,
    }
}

/// Training-time mixing of a source map with a target map.
///
/// With probability `cfg.apply_probability` the source features are restyled
/// with mixed statistics; otherwise (and always at inference) the source map
/// is returned unchanged. Errors on shape mismatch or an empty target batch.
pub fn mixstyle_forward<F: Elem>(
    tape: &Tape<F>,
    x_s: Var,
    x_a: Var,
    cfg: &MixStyleConfig,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<Var> {
    if !training {
        return Ok(x_s);
    }
    let s_val = tape.value(x_s);
    let a_val = tape.value(x_a);
    if s_val.ndim() != 4 || a_val.ndim() != 4 {
        return Err(Error::Shape("mixstyle expects (B, C, H, W) maps".into()));
    }
    if s_val.shape()[1..] != a_val.shape()[1..] {
        return Err(Error::Shape(format!(
            "mixstyle source/target shape mismatch: {:?} vs {:?}",
            s_val.shape(),
            a_val.shape()
        )));
    }
    let n_target = a_val.shape()[0];
    if n_target == 0 {
        return Err(Error::Shape(
            "mixstyle requires a non-empty target batch".into(),
        ));
    }
    let n_source = s_val.shape()[0];
    let draw = draw_mix(cfg, n_source, n_target, rng);
    if !draw.applied {
        return Ok(x_s);
    }

    let target_all = channel_stats(&a_val, cfg.epsilon)?;
    let c = target_all.mu.dim().1;
    let mut mu = Array2::<F>::zeros((n_source, c));
    let mut sigma = Array2::<F>::zeros((n_source, c));
    for (i, &j) in draw.pairing.iter().enumerate() {
        mu.row_mut(i).assign(&target_all.mu.row(j));
        sigma.row_mut(i).assign(&target_all.sigma.row(j));
    }
    let lambda = Array1::from_iter(draw.lambda.iter().map(|&l| F::from_f64(l)));
    Ok(mixstyle_restyle(
        tape,
        x_s,
        &FeatureStats { mu, sigma },
        &lambda,
        cfg.epsilon,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};
    use rand::SeedableRng;

    fn map_from(vals: &[f64], shape: &[usize]) -> ArrayD<f64> {
        ArrayD::from_shape_vec(IxDyn(shape), vals.to_vec()).unwrap()
    }

    #[test]
    fn constant_map_stats() {
        let x = ArrayD::from_elem(IxDyn(&[1, 1, 2, 2]), 3.0f64);
        let s = channel_stats(&x, 1e-6).unwrap();
        assert!((s.mu[[0, 0]] - 3.0).abs() < 1e-12);
        assert!((s.sigma[[0, 0]] - 1e-6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn two_value_map_stats() {
        let x = map_from(&[0.0, 2.0, 0.0, 2.0], &[1, 1, 2, 2]);
        let s = channel_stats(&x, 1e-6).unwrap();
        assert!((s.mu[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((s.sigma[[0, 0]] - (1.0 + 1e-6f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn stats_match_two_pass_oracle() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (b, c, h, w) = (3, 4, 5, 6);
        let data: Vec<f64> = (0..b * c * h * w).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = map_from(&data, &[b, c, h, w]);
        let s = channel_stats(&x, 1e-6).unwrap();
        for bi in 0..b {
            for ci in 0..c {
                // independent two-pass oracle
                let mut vals = Vec::new();
                for hi in 0..h {
                    for wi in 0..w {
                        vals.push(x[[bi, ci, hi, wi]]);
                    }
                }
                let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
                let var: f64 =
                    vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                assert!((s.mu[[bi, ci]] - mean).abs() < 1e-6);
                assert!((s.sigma[[bi, ci]] - (var + 1e-6).sqrt()).abs() < 1e-6);
            }
        }
    }

    fn stats(mu: f64, sigma: f64) -> FeatureStats<f64> {
        FeatureStats {
            mu: Array2::from_elem((1, 1), mu),
            sigma: Array2::from_elem((1, 1), sigma),
        }
    }

    #[test]
    fn mix_endpoints() {
        let s = stats(0.5, 2.0);
        let a = stats(8.0, 4.0);
        let (g1, b1) = mix_statistics(&s, &a, &Array1::from_elem(1, 1.0)).unwrap();
        assert_eq!((g1[[0, 0]], b1[[0, 0]]), (2.0, 0.5));
        let (g0, b0) = mix_statistics(&s, &a, &Array1::from_elem(1, 0.0)).unwrap();
        assert_eq!((g0[[0, 0]], b0[[0, 0]]), (4.0, 8.0));
    }

    #[test]
    fn mix_hand_computed_quarter() {
        // λ = 0.25, σ_s = 2, σ_a = 4, μ_s = 0, μ_a = 8 → γ = 3.5, β = 6.0
        let s = stats(0.0, 2.0);
        let a = stats(8.0, 4.0);
        let (g, b) = mix_statistics(&s, &a, &Array1::from_elem(1, 0.25)).unwrap();
        assert!((g[[0, 0]] - 3.5).abs() < 1e-12);
        assert!((b[[0, 0]] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn restyle_lambda_one_is_identity() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (b, c, h, w) = (2, 3, 4, 4);
        let data: Vec<f64> = (0..b * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = map_from(&data, &[b, c, h, w]);
        let tape = Tape::new(false);
        let xs = tape.input(x.clone());
        let target = channel_stats(&ArrayD::from_elem(IxDyn(&[b, c, h, w]), 0.0f64), 1e-6).unwrap();
        let out = mixstyle_restyle(&tape, xs, &target, &Array1::from_elem(b, 1.0), 1e-6);
        let out_val = tape.value(out);
        for (o, i) in out_val.iter().zip(x.iter()) {
            assert!((o - i).abs() < 1e-5, "identity violated: {o} vs {i}");
        }
    }

    #[test]
    fn restyle_output_stats_equal_mixture() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (b, c, h, w) = (3, 5, 7, 7);
        let src: Vec<f64> = (0..b * c * h * w).map(|_| rng.random_range(-2.0..2.0)).collect();
        let tgt: Vec<f64> = (0..b * c * h * w).map(|_| rng.random_range(-3.0..1.0)).collect();
        let x_s = map_from(&src, &[b, c, h, w]);
        let x_a = map_from(&tgt, &[b, c, h, w]);
        let lambda = Array1::from_vec(vec![0.0, 0.3, 1.0]);

        let stats_s = channel_stats(&x_s, 1e-6).unwrap();
        let stats_a = channel_stats(&x_a, 1e-6).unwrap();
        let (gamma, beta) = mix_statistics(&stats_s, &stats_a, &lambda).unwrap();

        let tape = Tape::new(false);
        let xs = tape.input(x_s);
        let out = mixstyle_restyle(&tape, xs, &stats_a, &lambda, 1e-6);
        let out_stats = channel_stats(&tape.value(out), 0.0).unwrap();
        for bi in 0..b {
            for ci in 0..c {
                assert!(
                    (out_stats.mu[[bi, ci]] - beta[[bi, ci]]).abs() < 1e-4,
                    "mu mismatch at ({bi},{ci})"
                );
                assert!(
                    (out_stats.sigma[[bi, ci]] - gamma[[bi, ci]]).abs() < 1e-4,
                    "sigma mismatch at ({bi},{ci})"
                );
            }
        }
    }

    #[test]
    fn inference_mode_returns_source_unchanged() {
        let tape = Tape::new(false);
        let x_s = tape.input(ArrayD::from_elem(IxDyn(&[2, 3, 4, 4]), 1.5f64));
        let x_a = tape.input(ArrayD::from_elem(IxDyn(&[2, 3, 4, 4]), -0.5f64));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = MixStyleConfig {
            apply_probability: 1.0,
            ..MixStyleConfig::default()
        };
        let out = mixstyle_forward(&tape, x_s, x_a, &cfg, &mut rng, false).unwrap();
        assert_eq!(out, x_s);
    }

    #[test]
    fn shape_mismatch_and_empty_target_rejected() {
        let tape = Tape::new(false);
        let x_s = tape.input(ArrayD::from_elem(IxDyn(&[2, 3, 4, 4]), 1.0f64));
        let bad = tape.input(ArrayD::from_elem(IxDyn(&[2, 2, 4, 4]), 1.0f64));
        let empty = tape.input(ArrayD::from_elem(IxDyn(&[0, 3, 4, 4]), 1.0f64));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = MixStyleConfig::default();
        assert!(mixstyle_forward(&tape, x_s, bad, &cfg, &mut rng, true).is_err());
        assert!(mixstyle_forward(&tape, x_s, empty, &cfg, &mut rng, true).is_err());
    }

    #[test]
    fn insertion_points_per_architecture() {
        assert_eq!(insertion_points("resnet18_binary").unwrap().len(), 2);
        assert_eq!(
            insertion_points("pixbis").unwrap(),
            vec![InsertionPoint::AfterDenseBlock1]
        );
        assert!(insertion_points("vgg16").is_err());
    }

    #[test]
    fn pairing_cycles_when_target_smaller() {
        let cfg = MixStyleConfig {
            apply_probability: 1.0,
            ..MixStyleConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draw = draw_mix(&cfg, 6, 2, &mut rng);
        assert!(draw.applied);
        assert_eq!(draw.pairing.len(), 6);
        assert!(draw.pairing.iter().all(|&p| p < 2));
        assert_eq!(draw.lambda.len(), 6);
        assert!(draw.lambda.iter().all(|&l| (0.0..=1.0).contains(&l)));
    }
}
