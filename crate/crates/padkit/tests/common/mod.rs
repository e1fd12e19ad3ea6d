//! Shared test support: a procedurally generated toy PAD corpus.
//!
//! Bona fide images are smooth low-frequency color fields; attacks add a
//! high-frequency moiré interference pattern plus a slight color bias (the
//! texture artifacts of print/replay capture). Two "domains" differ by a
//! strong global color cast, standing in for a capture-pipeline shift.

#![allow(dead_code)]

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use padkit::data::{write_manifest, Label, Manifest, MediaKind, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOY_SIZE: u32 = 224;

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Neutral,
    ColorCast,
}

pub fn toy_image(label: Label, domain: Domain, rng: &mut ChaCha8Rng) -> RgbImage {
    let mut img = RgbImage::new(TOY_SIZE, TOY_SIZE);
    // Smooth base: two low-frequency waves with random orientation/phase.
    let f1: f64 = rng.random_range(0.5..2.0);
    let f2: f64 = rng.random_range(0.5..2.0);
    let (p1, p2): (f64, f64) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
    let ang: f64 = rng.random_range(0.0..TAU);
    let (ca, sa) = (ang.cos(), ang.sin());
    let base: [f64; 3] = [
        rng.random_range(90.0..160.0),
        rng.random_range(90.0..160.0),
        rng.random_range(90.0..160.0),
    ];

    // Attack overlay: high-frequency moiré interference.
    let is_attack = label == Label::Attack;
    let period_x: f64 = rng.random_range(3.0..6.0);
    let period_y: f64 = rng.random_range(3.0..6.0);
    let (ma, mb): (f64, f64) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
    let amp: f64 = rng.random_range(28.0..44.0);

    let n = TOY_SIZE as f64;
    for y in 0..TOY_SIZE {
        for x in 0..TOY_SIZE {
            let (xf, yf) = (x as f64 / n, y as f64 / n);
            let u = ca * xf + sa * yf;
            let v = -sa * xf + ca * yf;
            let smooth = 40.0 * (TAU * f1 * u + p1).sin() + 25.0 * (TAU * f2 * v + p2).sin();
            let mut px = [
                base[0] + smooth,
                base[1] + smooth * 0.8,
                base[2] + smooth * 1.1,
            ];
            if is_attack {
                let moire = (TAU * x as f64 / period_x + ma).sin()
                    * (TAU * y as f64 / period_y + mb).sin();
                px[0] += amp * moire + 8.0;
                px[1] += amp * moire;
                px[2] += amp * moire - 8.0;
            }
            if domain == Domain::ColorCast {
                px[0] = px[0] * 1.35 + 30.0;
                px[1] *= 0.95;
                px[2] = px[2] * 0.55 - 10.0;
            }
            img.put_pixel(
                x,
                y,
                Rgb([
                    px[0].round().clamp(0.0, 255.0) as u8,
                    px[1].round().clamp(0.0, 255.0) as u8,
                    px[2].round().clamp(0.0, 255.0) as u8,
                ]),
            );
        }
    }
    img
}

fn sample_for(path: &Path, label: Label, dataset_id: &str) -> Sample {
    Sample {
        media_path: path.to_path_buf(),
        media_kind: MediaKind::Image,
        label,
        attack_type: match label {
            Label::BonaFide => String::new(),
            Label::Attack => "moire_replay".to_string(),
        },
        dataset_id: dataset_id.to_string(),
        video_id: path.file_stem().unwrap().to_string_lossy().into_owned(),
        frame_index: 0,
        face_box: None,
    }
}

/// Writes `n_bona` + `n_attack` toy images under `dir` and returns the
/// manifest path.
pub fn generate_split(
    dir: &Path,
    name: &str,
    dataset_id: &str,
    domain: Domain,
    n_bona: usize,
    n_attack: usize,
    seed: u64,
) -> PathBuf {
    let img_dir = dir.join(name);
    std::fs::create_dir_all(&img_dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for i in 0..n_bona + n_attack {
        let label = if i < n_bona { Label::BonaFide } else { Label::Attack };
        let img = toy_image(label, domain, &mut rng);
        let path = img_dir.join(format!("{name}_{i:04}.png"));
        img.save(&path).unwrap();
        rows.push(sample_for(&path, label, dataset_id));
    }
    let manifest_path = dir.join(format!("{name}.csv"));
    write_manifest(&manifest_path, &Manifest::new(rows)).unwrap();
    manifest_path
}

/// The standard corpus used by the training smoke tests: a source domain
/// with train/eval splits, plus a color-shifted domain with an unlabeled
/// adaptation pool and an eval split.
pub struct ToyCorpus {
    pub train_a: PathBuf,
    pub eval_a: PathBuf,
    pub target_b: PathBuf,
    pub eval_b: PathBuf,
}

#[derive(Clone, Copy)]
pub struct ToySizes {
    pub train_bona: usize,
    pub train_attack: usize,
    pub eval_bona: usize,
    pub eval_attack: usize,
    pub target_pool: usize,
}

impl ToySizes {
    pub fn small() -> Self {
        Self {
            train_bona: 8,
            train_attack: 8,
            eval_bona: 4,
            eval_attack: 4,
            target_pool: 8,
        }
    }
}

pub fn generate_corpus(dir: &Path, sizes: ToySizes, seed: u64) -> ToyCorpus {
    let train_a = generate_split(
        dir,
        "train_a",
        "toy_a",
        Domain::Neutral,
        sizes.train_bona,
        sizes.train_attack,
        seed,
    );
    let eval_a = generate_split(
        dir,
        "eval_a",
        "toy_a",
        Domain::Neutral,
        sizes.eval_bona,
        sizes.eval_attack,
        seed + 1,
    );
    let target_b = generate_split(
        dir,
        "target_b",
        "toy_b",
        Domain::ColorCast,
        sizes.target_pool / 2,
        sizes.target_pool - sizes.target_pool / 2,
        seed + 2,
    );
    let eval_b = generate_split(
        dir,
        "eval_b",
        "toy_b",
        Domain::ColorCast,
        sizes.eval_bona,
        sizes.eval_attack,
        seed + 3,
    );
    ToyCorpus {
        train_a,
        eval_a,
        target_b,
        eval_b,
    }
}
