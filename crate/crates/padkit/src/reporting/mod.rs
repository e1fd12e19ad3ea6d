//! Result reporting: penultimate-feature extraction, 2-D embeddings,
//! ROC plots, and protocol tables.

mod plot;
mod table;
mod tsne;

pub use plot::{plot_embedding, plot_roc, Canvas, ScatterPoint, PALETTE};
pub use table::{format_average, mean_and_std, render_results_table, TableRow};
pub use tsne::{project_2d, project_2d_with, DEFAULT_ITERATIONS, DEFAULT_PERPLEXITY};

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{images_to_tensor, load_manifest, prepare_sample, FrameDecoder, Sample};
use crate::error::{Error, Result};
use crate::models::PadModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorKey {
    Class,
    AttackType,
    Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MarkerKey {
    #[default]
    DatasetOrigin,
}

/// Inputs of an embedding run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub checkpoint: PathBuf,
    pub manifests: Vec<PathBuf>,
    pub samples_per_dataset: usize,
    pub color_key: ColorKey,
    #[serde(default)]
    pub marker_key: MarkerKey,
    pub seed: u64,
}

/// One output row of an embedding run.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub dataset_id: String,
    pub video_id: String,
    pub label: crate::data::Label,
    pub attack_type: String,
    /// Index of the source manifest (origin group for markers).
    pub origin: usize,
    pub x: f64,
    pub y: f64,
}

/// Penultimate feature vectors for a list of samples, in order.
pub fn extract_features(
    model: &mut PadModel<f32>,
    samples: &[Sample],
    decoder: &dyn FrameDecoder,
    margin: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut features = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(32) {
        let images: Vec<image::RgbImage> = chunk
            .par_iter()
            .map(|s| prepare_sample(s, decoder, margin, None))
            .collect::<Result<_>>()?;
        let tensor = images_to_tensor::<f32>(&images);
        for p in model.predict_tensor(&tensor)? {
            features.push(p.features);
        }
    }
    Ok(features)
}

/// Draws `n` distinct rows from a manifest (error when it is too small —
/// sampling is without replacement).
fn sample_rows<'a>(
    rows: &'a [Sample],
    n: usize,
    rng: &mut ChaCha8Rng,
    manifest: &Path,
) -> Result<Vec<&'a Sample>> {
    if n > rows.len() {
        return Err(Error::Reporting(format!(
            "cannot sample {n} distinct rows from {} ({} rows)",
            manifest.display(),
            rows.len()
        )));
    }
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(rng);
    Ok(idx[..n].iter().map(|&i| &rows[i]).collect())
}

/// Samples rows from each manifest, extracts features, and embeds them in
/// 2-D. Rows keep their manifest-of-origin index for marker grouping.
pub fn run_embedding(
    model: &mut PadModel<f32>,
    manifests: &[PathBuf],
    samples_per_dataset: usize,
    seed: u64,
    decoder: &dyn FrameDecoder,
    margin: f64,
) -> Result<Vec<EmbeddingRow>> {
    if manifests.is_empty() {
        return Err(Error::Reporting("no manifests to embed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected: Vec<(usize, Sample)> = Vec::new();
    for (origin, path) in manifests.iter().enumerate() {
        let manifest = load_manifest(path)?;
        for s in sample_rows(&manifest.rows, samples_per_dataset, &mut rng, path)? {
            selected.push((origin, s.clone()));
        }
    }
    let samples: Vec<Sample> = selected.iter().map(|(_, s)| s.clone()).collect();
    let features = extract_features(model, &samples, decoder, margin)?;
    let points = project_2d(&features, seed)?;
    Ok(selected
        .into_iter()
        .zip(points)
        .map(|((origin, s), (x, y))| EmbeddingRow {
            dataset_id: s.dataset_id,
            video_id: s.video_id,
            label: s.label,
            attack_type: s.attack_type,
            origin,
            x,
            y,
        })
        .collect())
}

pub const EMBEDDING_CSV_HEADER: &str = "dataset_id,video_id,label,attack_type,x,y";

pub fn write_embedding_csv(path: impl AsRef<Path>, rows: &[EmbeddingRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(EMBEDDING_CSV_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.dataset_id.as_str(),
            r.video_id.as_str(),
            r.label.as_str(),
            r.attack_type.as_str(),
            &r.x.to_string(),
            &r.y.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar recording the embedding hyperparameters (plots carry no
/// timestamps or environment data).
pub fn write_embedding_meta(path: impl AsRef<Path>, seed: u64) -> Result<()> {
    let mut f = std::fs::File::create(path.as_ref())?;
    writeln!(f, "method=tsne")?;
    writeln!(f, "perplexity={DEFAULT_PERPLEXITY}")?;
    writeln!(f, "iterations={DEFAULT_ITERATIONS}")?;
    writeln!(f, "seed={seed}")?;
    Ok(())
}

/// Converts embedding rows into scatter points under a color key.
pub fn scatter_points(rows: &[EmbeddingRow], color_key: ColorKey) -> Vec<ScatterPoint> {
    rows.iter()
        .map(|r| ScatterPoint {
            x: r.x,
            y: r.y,
            color_class: match color_key {
                ColorKey::Class => r.label.as_str().to_string(),
                ColorKey::AttackType => {
                    if r.attack_type.is_empty() {
                        "bonafide".to_string()
                    } else {
                        r.attack_type.clone()
                    }
                }
                ColorKey::Dataset => r.dataset_id.clone(),
            },
            marker_class: format!("origin{}", r.origin),
        })
        .collect()
}
