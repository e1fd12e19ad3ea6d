//! Class-balanced batch composition by weighted sampling with replacement.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Label, Manifest};
use crate::error::{Error, Result};

/// Stream of index batches over one epoch.
///
/// Each slot flips a fair coin for the class and then draws uniformly within
/// that class (with replacement), so the expected bona fide : attack ratio is
/// 1:1 regardless of the manifest's class skew. One epoch is
/// `ceil(len / batch_size)` batches.
pub struct BalancedBatches {
    bona: Vec<usize>,
    attack: Vec<usize>,
    batch_size: usize,
    remaining: usize,
    rng: ChaCha8Rng,
}

impl Iterator for BalancedBatches {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let mut batch = Vec::with_capacity(self.batch_size);
        for _ in 0..self.batch_size {
            let pool = if self.rng.random::<bool>() {
                &self.bona
            } else {
                &self.attack
            };
            batch.push(pool[self.rng.random_range(0..pool.len())]);
        }
        Some(batch)
    }
}

impl BalancedBatches {
    pub fn batches_per_epoch(&self) -> usize {
        self.remaining
    }
}

/// Builds the balanced batch stream for one epoch over `manifest`.
pub fn compose_balanced_batches(
    manifest: &Manifest,
    batch_size: usize,
    rng: ChaCha8Rng,
) -> Result<BalancedBatches> {
    if batch_size == 0 || batch_size % 2 != 0 {
        return Err(Error::Config(format!(
            "batch_size must be a positive even number, got {batch_size}"
        )));
    }
    let mut bona = Vec::new();
    let mut attack = Vec::new();
    for (i, s) in manifest.rows.iter().enumerate() {
        match s.label {
            Label::BonaFide => bona.push(i),
            Label::Attack => attack.push(i),
        }
    }
    if bona.is_empty() || attack.is_empty() {
        return Err(Error::Data(format!(
            "balanced sampling needs both classes; manifest has {} bona fide and {} attack rows",
            bona.len(),
            attack.len()
        )));
    }
    let remaining = manifest.len().div_ceil(batch_size);
    Ok(BalancedBatches {
        bona,
        attack,
        batch_size,
        remaining,
        rng,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MediaKind, Sample};
    use rand::SeedableRng;
    use std::path::PathBuf;

    fn manifest_with_ratio(n_bona: usize, n_attack: usize) -> Manifest {
        let mut rows = Vec::new();
        for i in 0..n_bona + n_attack {
            let label = if i < n_bona { Label::BonaFide } else { Label::Attack };
            rows.push(Sample {
                media_path: PathBuf::from(format!("img_{i}.png")),
                media_kind: MediaKind::Image,
                label,
                attack_type: if label == Label::Attack { "print".into() } else { String::new() },
                dataset_id: "toy".into(),
                video_id: format!("img_{i}"),
                frame_index: 0,
                face_box: None,
            });
        }
        Manifest::new(rows)
    }

    fn bona_fraction(manifest: &Manifest, draws: usize, batch: usize, seed: u64) -> f64 {
        let rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stream = compose_balanced_batches(manifest, batch, rng).unwrap();
        let mut taken = 0usize;
        let mut bona = 0usize;
        while taken < draws {
            let b = match stream.next() {
                Some(b) => b,
                None => {
                    stream = compose_balanced_batches(
                        manifest,
                        batch,
                        ChaCha8Rng::seed_from_u64(seed + 1 + taken as u64),
                    )
                    .unwrap();
                    continue;
                }
            };
            for idx in b {
                if manifest.rows[idx].label == Label::BonaFide {
                    bona += 1;
                }
                taken += 1;
            }
        }
        bona as f64 / taken as f64
    }

    #[test]
    fn skewed_manifest_balances_to_half() {
        let m = manifest_with_ratio(100, 900);
        let frac = bona_fraction(&m, 10_000, 100, 7);
        assert!((frac - 0.5).abs() < 0.02, "bona fraction {frac}");
    }

    #[test]
    fn already_balanced_manifest_stays_half() {
        let m = manifest_with_ratio(500, 500);
        let frac = bona_fraction(&m, 10_000, 100, 9);
        assert!((frac - 0.5).abs() < 0.02, "bona fraction {frac}");
    }

    #[test]
    fn single_class_rejected() {
        let m = manifest_with_ratio(0, 50);
        let rng = ChaCha8Rng::seed_from_u64(0);
        assert!(compose_balanced_batches(&m, 10, rng).is_err());
    }

    #[test]
    fn odd_batch_size_rejected() {
        let m = manifest_with_ratio(5, 5);
        let rng = ChaCha8Rng::seed_from_u64(0);
        assert!(compose_balanced_batches(&m, 7, rng).is_err());
    }

    #[test]
    fn epoch_length_is_ceil() {
        let m = manifest_with_ratio(5, 8); // 13 rows
        let rng = ChaCha8Rng::seed_from_u64(0);
        let stream = compose_balanced_batches(&m, 4, rng).unwrap();
        assert_eq!(stream.count(), 4); // ceil(13 / 4)
    }
}
