//! Exact (O(n²)) 2-D stochastic neighbor embedding with deterministic
//! seeding, used for feature-space visualization.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_PERPLEXITY: f64 = 30.0;
pub const DEFAULT_ITERATIONS: usize = 1000;

const EARLY_EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;
const LEARNING_RATE: f64 = 200.0;

/// Embeds feature vectors into 2-D. Deterministic given the seed; the
/// perplexity defaults to 30 and is clipped to `(n − 1) / 3` for small
/// inputs.
pub fn project_2d(features: &[Vec<f64>], seed: u64) -> Result<Vec<(f64, f64)>> {
    project_2d_with(features, seed, DEFAULT_PERPLEXITY, DEFAULT_ITERATIONS)
}

pub fn project_2d_with(
    features: &[Vec<f64>],
    seed: u64,
    perplexity: f64,
    iterations: usize,
) -> Result<Vec<(f64, f64)>> {
    let n = features.len();
    if n < 2 {
        return Err(Error::Reporting(
            "2-D projection needs at least 2 feature vectors".into(),
        ));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::Reporting(
            "feature vectors have inconsistent lengths".into(),
        ));
    }
    let perplexity = perplexity.min(((n - 1) as f64 / 3.0).max(1.0));

    // Pairwise squared distances.
    let d2: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    features[i]
                        .iter()
                        .zip(&features[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum()
                })
                .collect()
        })
        .collect();

    // Per-point precision via binary search on the conditional entropy.
    let target_entropy = perplexity.ln();
    let p_cond: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| conditional_probabilities(&d2[i], i, target_entropy))
        .collect();

    // Symmetrize: p_ij = (p_{j|i} + p_{i|j}) / 2n.
    let mut p = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            p[i][j] = ((p_cond[i][j] + p_cond[j][i]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    // Seeded small-variance Gaussian init.
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1e-4).unwrap();
    let mut y: Vec<(f64, f64)> = (0..n)
        .map(|_| (normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect();
    let mut velocity = vec![(0.0f64, 0.0f64); n];
    let mut gains = vec![(1.0f64, 1.0f64); n];

    // Early exaggeration destabilizes degenerate inputs (for n = 2 the
    // objective is constant in the layout); require room for it.
    let use_exaggeration = n as f64 >= 3.0 * perplexity.max(2.0);

    for iter in 0..iterations {
        let exaggeration = if use_exaggeration && iter < EXAGGERATION_ITERS {
            EARLY_EXAGGERATION
        } else {
            1.0
        };
        let momentum = if iter < EXAGGERATION_ITERS { 0.5 } else { 0.8 };

        // Student-t affinities in the embedding.
        let weights: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else {
                            let dx = y[i].0 - y[j].0;
                            let dy = y[i].1 - y[j].1;
                            1.0 / (1.0 + dx * dx + dy * dy)
                        }
                    })
                    .collect()
            })
            .collect();
        let w_sum: f64 = weights.iter().map(|row| row.iter().sum::<f64>()).sum();

        let grads: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut gx = 0.0;
                let mut gy = 0.0;
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let q = (weights[i][j] / w_sum).max(1e-12);
                    let coeff = 4.0 * (exaggeration * p[i][j] - q) * weights[i][j];
                    gx += coeff * (y[i].0 - y[j].0);
                    gy += coeff * (y[i].1 - y[j].1);
                }
                (gx, gy)
            })
            .collect();

        for i in 0..n {
            let update = |g: f64, v: &mut f64, gain: &mut f64| {
                *gain = if g.signum() != v.signum() {
                    (*gain + 0.2).max(0.01)
                } else {
                    (*gain * 0.8).max(0.01)
                };
                *v = momentum * *v - LEARNING_RATE * *gain * g;
            };
            update(grads[i].0, &mut velocity[i].0, &mut gains[i].0);
            update(grads[i].1, &mut velocity[i].1, &mut gains[i].1);
            y[i].0 += velocity[i].0;
            y[i].1 += velocity[i].1;
        }

        // Re-center.
        let mx = y.iter().map(|p| p.0).sum::<f64>() / n as f64;
        let my = y.iter().map(|p| p.1).sum::<f64>() / n as f64;
        for p in &mut y {
            p.0 -= mx;
            p.1 -= my;
        }
    }
    Ok(y)
}

/// Binary search for the Gaussian precision matching the target entropy,
/// returning the conditional distribution over the other points.
fn conditional_probabilities(d2_row: &[f64], i: usize, target_entropy: f64) -> Vec<f64> {
    let n = d2_row.len();
    let mut beta = 1.0f64;
    let mut beta_min = f64::NEG_INFINITY;
    let mut beta_max = f64::INFINITY;
    let mut probs = vec![0.0f64; n];

    for _ in 0..50 {
        let mut sum = 0.0;
        for j in 0..n {
            probs[j] = if j == i { 0.0 } else { (-d2_row[j] * beta).exp() };
            sum += probs[j];
        }
        if sum <= 0.0 {
            // All mass collapsed; relax the precision.
            beta /= 2.0;
            continue;
        }
        let mut entropy = 0.0;
        for item in probs.iter_mut() {
            *item /= sum;
            if *item > 1e-12 {
                entropy -= *item * item.ln();
            }
        }
        let diff = entropy - target_entropy;
        if diff.abs() < 1e-5 {
            break;
        }
        if diff > 0.0 {
            beta_min = beta;
            beta = if beta_max.is_infinite() {
                beta * 2.0
            } else {
                (beta + beta_max) / 2.0
            };
        } else {
            beta_max = beta;
            beta = if beta_min.is_infinite() {
                beta / 2.0
            } else {
                (beta + beta_min) / 2.0
            };
        }
    }
    probs
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn blobs(centers: &[(f64, f64, f64)], per_blob: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for (ci, &(cx, cy, spread)) in centers.iter().enumerate() {
            for _ in 0..per_blob {
                let mut v = vec![0.0; dim];
                v[0] = cx + rng.random_range(-spread..spread);
                v[1] = cy + rng.random_range(-spread..spread);
                for item in v.iter_mut().skip(2) {
                    *item = rng.random_range(-spread..spread);
                }
                feats.push(v);
                labels.push(ci);
            }
        }
        (feats, labels)
    }

    /// Mean silhouette over all points (oracle for clustering quality).
    fn silhouette(points: &[(f64, f64)], labels: &[usize]) -> f64 {
        let n = points.len();
        let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        let classes: Vec<usize> = {
            let mut c = labels.to_vec();
            c.sort_unstable();
            c.dedup();
            c
        };
        let mut total = 0.0;
        for i in 0..n {
            let mut within = Vec::new();
            let mut between: Vec<f64> = Vec::new();
            for &class in &classes {
                let ds: Vec<f64> = (0..n)
                    .filter(|&j| j != i && labels[j] == class)
                    .map(|j| dist(points[i], points[j]))
                    .collect();
                if ds.is_empty() {
                    continue;
                }
                let mean = ds.iter().sum::<f64>() / ds.len() as f64;
                if class == labels[i] {
                    within.push(mean);
                } else {
                    between.push(mean);
                }
            }
            let a = within.first().copied().unwrap_or(0.0);
            let b = between.iter().cloned().fold(f64::INFINITY, f64::min);
            total += (b - a) / a.max(b);
        }
        total / n as f64
    }

    #[test]
    fn identical_vectors_stay_coincident() {
        let feats = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]];
        let y = project_2d(&feats, 7).unwrap();
        let d = ((y[0].0 - y[1].0).powi(2) + (y[0].1 - y[1].1).powi(2)).sqrt();
        assert!(d < 1e-3, "distance {d}");
    }

    #[test]
    fn deterministic_given_seed() {
        let (feats, _) = blobs(&[(0.0, 0.0, 1.0), (20.0, 0.0, 1.0)], 15, 8, 3);
        let a = project_2d(&feats, 11).unwrap();
        let b = project_2d(&feats, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_blobs_separate_well() {
        let (feats, labels) = blobs(&[(0.0, 0.0, 1.0), (25.0, 0.0, 1.0)], 25, 10, 5);
        let y = project_2d_with(&feats, 13, 30.0, 500).unwrap();
        let s = silhouette(&y, &labels);
        assert!(s > 0.5, "silhouette {s}");
    }

    #[test]
    fn three_blob_distance_ranks() {
        let (feats, labels) = blobs(
            &[(0.0, 0.0, 1.0), (30.0, 0.0, 1.0), (0.0, 30.0, 1.0)],
            20,
            6,
            9,
        );
        let y = project_2d_with(&feats, 17, 30.0, 500).unwrap();
        let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        let mut within: Vec<f64> = Vec::new();
        let mut between: Vec<f64> = Vec::new();
        for i in 0..y.len() {
            for j in i + 1..y.len() {
                if labels[i] == labels[j] {
                    within.push(dist(y[i], y[j]));
                } else {
                    between.push(dist(y[i], y[j]));
                }
            }
        }
        let mut ok = 0usize;
        let mut total = 0usize;
        for &w in &within {
            for &b in &between {
                total += 1;
                if w < b {
                    ok += 1;
                }
            }
        }
        let frac = ok as f64 / total as f64;
        assert!(frac >= 0.9, "within<between fraction {frac}");
    }

    #[test]
    fn fewer_than_two_vectors_rejected() {
        assert!(project_2d(&[vec![1.0]], 0).is_err());
        assert!(project_2d(&[], 0).is_err());
    }
}
