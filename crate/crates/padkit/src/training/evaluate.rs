//! Checkpoint evaluation: per-frame scoring, per-video fusion, metrics.

use rayon::prelude::*;

use crate::data::{images_to_tensor, prepare_sample, FrameDecoder, Manifest};
use crate::error::Result;
use crate::metrics::{
    compute_report, fuse_video_scores, MetricsReport, ScoreRecord, ThresholdPolicy,
};
use crate::models::PadModel;

const EVAL_BATCH: usize = 32;

pub struct EvalOutcome {
    pub frame_scores: Vec<ScoreRecord>,
    pub video_scores: Vec<ScoreRecord>,
    pub report: MetricsReport,
}

/// Per-frame PAD scores for every row of a manifest (inference mode, no
/// augmentation).
pub fn score_manifest(
    model: &mut PadModel<f32>,
    manifest: &Manifest,
    decoder: &dyn FrameDecoder,
    margin: f64,
) -> Result<Vec<ScoreRecord>> {
    let mut records = Vec::with_capacity(manifest.len());
    for chunk in manifest.rows.chunks(EVAL_BATCH) {
        let images: Vec<image::RgbImage> = chunk
            .par_iter()
            .map(|sample| prepare_sample(sample, decoder, margin, None))
            .collect::<Result<_>>()?;
        let tensor = images_to_tensor::<f32>(&images);
        let predictions = model.predict_tensor(&tensor)?;
        for (sample, pred) in chunk.iter().zip(predictions) {
            records.push(ScoreRecord {
                dataset_id: sample.dataset_id.clone(),
                video_id: sample.video_id.clone(),
                frame_index: sample.frame_index as i64,
                label: sample.label,
                score: pred.score,
            });
        }
    }
    Ok(records)
}

/// Scores a manifest, fuses frames per video (mean rule), and computes the
/// metrics report at the requested threshold policy.
pub fn evaluate_model(
    model: &mut PadModel<f32>,
    manifest: &Manifest,
    decoder: &dyn FrameDecoder,
    margin: f64,
    policy: ThresholdPolicy,
) -> Result<EvalOutcome> {
    let frame_scores = score_manifest(model, manifest, decoder, margin)?;
    let video_scores = fuse_video_scores(&frame_scores)?;
    let report = compute_report(&video_scores, policy)?;
    Ok(EvalOutcome {
        frame_scores,
        video_scores,
        report,
    })
}
