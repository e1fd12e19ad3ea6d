//! The training loop.

use ndarray::ArrayD;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{
    compose_balanced_batches, images_to_tensor, load_manifest, prepare_sample, FrameDecoder,
    Manifest, Sample,
};
use crate::error::{Error, Result};
use crate::models::{build_model, ForwardMode, PadModel};
use crate::models::losses::training_loss;
use crate::nn::{derive_seed, lr_for_epoch, Sgd, Tape};

use super::config::{TrainConfig, TrainMode};

const TAG_SAMPLER: u64 = 1;
const TAG_AUG: u64 = 2;
const TAG_MIX: u64 = 3;
const TAG_TARGET: u64 = 4;
const TAG_INIT: u64 = 5;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

pub struct TrainOutcome {
    pub model: PadModel<f32>,
    pub log: Vec<EpochLog>,
}

/// Aborts training after a run of non-finite losses (corrupt inputs or a
/// poisoned checkpoint; the clamped losses keep ordinary divergence finite).
pub struct DivergenceGuard {
    patience: usize,
    consecutive: usize,
}

impl Default for DivergenceGuard {
    fn default() -> Self {
        Self {
            patience: 10,
            consecutive: 0,
        }
    }
}

impl DivergenceGuard {
    pub fn observe(&mut self, loss: f64) -> Result<()> {
        if loss.is_finite() {
            self.consecutive = 0;
            return Ok(());
        }
        self.consecutive += 1;
        if self.consecutive >= self.patience {
            return Err(Error::Diverged {
                consecutive: self.consecutive,
            });
        }
        Ok(())
    }
}

struct BatchPlan<'a> {
    /// Samples in batch order: loss-carrying rows first.
    slots: Vec<&'a Sample>,
    /// Targets for the loss rows.
    targets: Vec<f64>,
    /// Rows `[0, n_source)` form the source half of a mixed batch.
    n_source: usize,
    /// Number of leading slots that get augmented (training inputs; the
    /// unlabeled statistics-only half is left unaugmented).
    n_augmented: usize,
    mixed: bool,
}

/// Trains a model according to the configured mode and recipe.
pub fn train(cfg: &TrainConfig, decoder: &dyn FrameDecoder) -> Result<TrainOutcome> {
    cfg.validate()?;
    let sources: Vec<Manifest> = cfg
        .source_manifests
        .iter()
        .map(load_manifest)
        .collect::<Result<_>>()?;
    let source = Manifest::merged(&sources.iter().collect::<Vec<_>>());
    if source.is_empty() {
        return Err(Error::Data("source manifests contain no rows".into()));
    }
    let second = cfg
        .target_manifest
        .as_ref()
        .map(load_manifest)
        .transpose()?;
    if let Some(second) = &second {
        if second.is_empty() {
            return Err(Error::Data("target manifest contains no rows".into()));
        }
    }

    let mut model = build_model::<f32>(&cfg.model, derive_seed(cfg.seed, &[TAG_INIT]))?;
    let mut sgd = Sgd::new(cfg.lr0, cfg.momentum, cfg.weight_decay);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut guard = DivergenceGuard::default();

    for epoch in 0..cfg.epochs {
        sgd.lr = lr_for_epoch(cfg.lr0, cfg.lr_gamma, epoch);
        let mut epoch_loss = 0.0f64;
        let mut steps = 0usize;

        let plans = plan_epoch(cfg, &source, second.as_ref(), epoch)?;
        for (batch_idx, plan) in plans.into_iter().enumerate() {
            let images: Vec<image::RgbImage> = plan
                .slots
                .par_iter()
                .enumerate()
                .map(|(slot, sample)| {
                    let aug = if cfg.augmentation.enabled && slot < plan.n_augmented {
                        Some(derive_seed(
                            cfg.seed,
                            &[TAG_AUG, epoch as u64, batch_idx as u64, slot as u64],
                        ))
                    } else {
                        None
                    };
                    let mut rng = aug.map(ChaCha8Rng::seed_from_u64);
                    prepare_sample(
                        sample,
                        decoder,
                        cfg.crop_margin,
                        rng.as_mut().map(|r| (&cfg.augmentation, r)),
                    )
                })
                .collect::<Result<_>>()?;
            let tensor: ArrayD<f32> = images_to_tensor(&images);

            let tape = Tape::new(true);
            let x = tape.input(tensor);
            let mut mix_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.seed,
                &[TAG_MIX, epoch as u64, batch_idx as u64],
            ));
            let mode = if plan.mixed {
                ForwardMode::TrainMixed {
                    n_source: plan.n_source,
                    rng: &mut mix_rng,
                    drop_target_tail: cfg.mode == TrainMode::MixstyleDa,
                }
            } else {
                ForwardMode::Train
            };
            let out = model.forward(&tape, x, mode)?;
            let loss = training_loss(&tape, &out, &plan.targets);
            let loss_value = tape.scalar_value(loss) as f64;
            guard.observe(loss_value)?;

            model.store.zero_grads();
            tape.backward(loss, &mut model.store);
            drop(tape);
            sgd.step(&mut model.store);

            epoch_loss += loss_value;
            steps += 1;
        }

        log.push(EpochLog {
            epoch,
            mean_loss: epoch_loss / steps.max(1) as f64,
            lr: sgd.lr,
        });
    }

    Ok(TrainOutcome { model, log })
}

/// Builds the batch plans for one epoch under the configured mode.
fn plan_epoch<'a>(
    cfg: &TrainConfig,
    source: &'a Manifest,
    second: Option<&'a Manifest>,
    epoch: usize,
) -> Result<Vec<BatchPlan<'a>>> {
    let sampler_rng = |tag: u64| {
        ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[TAG_SAMPLER, tag, epoch as u64]))
    };
    match cfg.mode {
        TrainMode::SourceOnly => {
            let batches = compose_balanced_batches(source, cfg.batch_size, sampler_rng(0))?;
            Ok(batches
                .map(|idx| full_batch_plan(source, idx))
                .collect())
        }
        TrainMode::Combined => {
            let second = second.expect("validated");
            let merged = Manifest::merged(&[source, second]);
            let batches = compose_balanced_batches(&merged, cfg.batch_size, sampler_rng(0))?;
            // plan_epoch returns plans borrowing `source`/`second`; the merged
            // manifest is local, so resolve indices back to the originals.
            let n_src = source.len();
            Ok(batches
                .map(|idx| {
                    let slots: Vec<&Sample> = idx
                        .iter()
                        .map(|&i| {
                            if i < n_src {
                                &source.rows[i]
                            } else {
                                &second.rows[i - n_src]
                            }
                        })
                        .collect();
                    let targets = slots.iter().map(|s| s.label.target()).collect();
                    let n = slots.len();
                    BatchPlan {
                        slots,
                        targets,
                        n_source: n,
                        n_augmented: n,
                        mixed: false,
                    }
                })
                .collect())
        }
        TrainMode::MixstyleDa => {
            let second = second.expect("validated");
            let half = cfg.batch_size / 2;
            let n_batches = source.len().div_ceil(cfg.batch_size);
            // Balanced source stream; only the first half of each yielded
            // batch is used, which preserves the per-slot class coin flips.
            let src_batches: Vec<Vec<usize>> =
                compose_balanced_batches(source, cfg.batch_size, sampler_rng(0))?
                    .take(n_batches)
                    .collect();
            let mut tgt_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.seed,
                &[TAG_TARGET, epoch as u64],
            ));
            Ok(src_batches
                .into_iter()
                .map(|idx| {
                    let mut slots: Vec<&Sample> =
                        idx[..half].iter().map(|&i| &source.rows[i]).collect();
                    let targets: Vec<f64> = slots.iter().map(|s| s.label.target()).collect();
                    for _ in 0..half {
                        slots.push(&second.rows[tgt_rng.random_range(0..second.len())]);
                    }
                    BatchPlan {
                        slots,
                        targets,
                        n_source: half,
                        n_augmented: half,
                        mixed: true,
                    }
                })
                .collect())
        }
        TrainMode::CombinedMixstyle => {
            let second = second.expect("validated");
            let half = cfg.batch_size / 2;
            let n_batches = (source.len() + second.len()).div_ceil(cfg.batch_size);
            let src_batches: Vec<Vec<usize>> =
                compose_balanced_batches(source, cfg.batch_size, sampler_rng(0))?
                    .take(n_batches)
                    .collect();
            let mut tgt_batches =
                compose_balanced_batches(second, cfg.batch_size, sampler_rng(1))?;
            let mut plans = Vec::new();
            for idx in src_batches {
                let tgt_idx = match tgt_batches.next() {
                    Some(b) => b,
                    None => {
                        tgt_batches =
                            compose_balanced_batches(second, cfg.batch_size, sampler_rng(2))?;
                        tgt_batches.next().expect("fresh stream")
                    }
                };
                let mut slots: Vec<&Sample> =
                    idx[..half].iter().map(|&i| &source.rows[i]).collect();
                slots.extend(tgt_idx[..half].iter().map(|&i| &second.rows[i]));
                let targets = slots.iter().map(|s| s.label.target()).collect();
                plans.push(BatchPlan {
                    slots,
                    targets,
                    n_source: half,
                    n_augmented: cfg.batch_size,
                    mixed: true,
                });
            }
            // May fall short of n_batches only if both pools are empty.
            debug_assert!(!plans.is_empty());
            Ok(plans)
        }
    }
}

fn full_batch_plan<'a>(manifest: &'a Manifest, idx: Vec<usize>) -> BatchPlan<'a> {
    let slots: Vec<&Sample> = idx.iter().map(|&i| &manifest.rows[i]).collect();
    let targets = slots.iter().map(|s| s.label.target()).collect();
    let n = slots.len();
    BatchPlan {
        slots,
        targets,
        n_source: n,
        n_augmented: n,
        mixed: false,
    }
}

/// Serializes the training log as newline-delimited JSON records.
pub fn write_training_log(path: impl AsRef<std::path::Path>, log: &[EpochLog]) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path.as_ref())?;
    for entry in log {
        let line = serde_json::to_string(entry)
            .map_err(|e| Error::Data(format!("cannot encode log entry: {e}")))?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divergence_guard_trips_after_ten_consecutive() {
        let mut guard = DivergenceGuard::default();
        for _ in 0..9 {
            guard.observe(f64::NAN).unwrap();
        }
        assert!(matches!(
            guard.observe(f64::INFINITY),
            Err(Error::Diverged { consecutive: 10 })
        ));
    }

    #[test]
    fn divergence_guard_resets_on_finite_loss() {
        let mut guard = DivergenceGuard::default();
        for _ in 0..3 {
            for _ in 0..9 {
                guard.observe(f64::NAN).unwrap();
            }
            guard.observe(0.5).unwrap();
        }
    }
}
