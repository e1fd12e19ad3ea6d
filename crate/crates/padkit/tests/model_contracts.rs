//! Contract tests for the two classifier architectures.

use ndarray::{ArrayD, IxDyn};
use padkit::mixstyle::MixStyleConfig;
use padkit::models::{
    build_model, load_checkpoint, predict_score, save_checkpoint, Architecture, ForwardMode,
    PadModelConfig, ScoreSource, PIXEL_MAP_SIDE,
};
use padkit::nn::Tape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_images(batch: usize, seed: u64) -> ArrayD<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = batch * 3 * 224 * 224;
    let data: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    ArrayD::from_shape_vec(IxDyn(&[batch, 3, 224, 224]), data).unwrap()
}

#[test]
fn resnet_scores_in_range_no_pixel_maps() {
    let cfg = PadModelConfig::new(Architecture::Resnet18Binary);
    let mut model = build_model::<f32>(&cfg, 1).unwrap();
    let preds = model.predict_tensor(&random_images(4, 2)).unwrap();
    assert_eq!(preds.len(), 4);
    for p in &preds {
        assert!((0.0..=1.0).contains(&p.score));
        assert!(p.pixel_map.is_none());
        assert_eq!(p.features.len(), 512);
    }
}

#[test]
fn pixbis_produces_14x14_maps() {
    // Spatial trace: 224 → stem /4 → 56 → transition1 /2 → 28 → transition2 /2 → 14.
    let cfg = PadModelConfig::new(Architecture::Pixbis);
    let mut model = build_model::<f32>(&cfg, 1).unwrap();
    let preds = model.predict_tensor(&random_images(4, 3)).unwrap();
    assert_eq!(preds.len(), 4);
    for p in &preds {
        assert!((0.0..=1.0).contains(&p.score));
        let map = p.pixel_map.as_ref().expect("pixbis emits a pixel map");
        assert_eq!(map.dim(), (PIXEL_MAP_SIDE, PIXEL_MAP_SIDE));
        assert!(map.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(p.features.len(), 256);
    }
}

#[test]
fn pixel_map_mean_score_source() {
    let cfg = PadModelConfig {
        score_source: Some(ScoreSource::PixelMapMean),
        ..PadModelConfig::new(Architecture::Pixbis)
    };
    let mut model = build_model::<f32>(&cfg, 1).unwrap();
    let preds = model.predict_tensor(&random_images(2, 4)).unwrap();
    for p in preds {
        let map = p.pixel_map.unwrap();
        let mean = map.iter().sum::<f64>() / map.len() as f64;
        assert!((p.score - mean).abs() < 1e-9);
    }
}

#[test]
fn inference_is_deterministic() {
    let cfg = PadModelConfig::new(Architecture::Resnet18Binary);
    let mut model = build_model::<f32>(&cfg, 5).unwrap();
    let images = random_images(2, 6);
    let a = predict_score(&mut model, &images).unwrap();
    let b = predict_score(&mut model, &images).unwrap();
    assert_eq!(a, b);
}

#[test]
fn batch_call_equals_per_image_calls() {
    let cfg = PadModelConfig::new(Architecture::Resnet18Binary);
    let mut model = build_model::<f32>(&cfg, 7).unwrap();
    let images = random_images(3, 8);
    let batch_scores = predict_score(&mut model, &images).unwrap();
    for bi in 0..3 {
        let single = images
            .slice_axis(ndarray::Axis(0), ndarray::Slice::from(bi..bi + 1))
            .to_owned();
        let s = predict_score(&mut model, &single.into_dyn()).unwrap();
        assert!(
            (batch_scores[bi] - s[0]).abs() < 1e-6,
            "batch {} vs single {}",
            batch_scores[bi],
            s[0]
        );
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let cfg = PadModelConfig {
        mixstyle: Some(MixStyleConfig::default()),
        ..PadModelConfig::new(Architecture::Pixbis)
    };
    let mut model = build_model::<f32>(&cfg, 11).unwrap();
    let images = random_images(2, 12);
    let before = predict_score(&mut model, &images).unwrap();

    save_checkpoint(&path, &model).unwrap();
    let mut restored = load_checkpoint(&path).unwrap();
    assert_eq!(restored.cfg, model.cfg);
    let after = predict_score(&mut restored, &images).unwrap();
    for (a, b) in before.iter().zip(&after) {
        assert!((a - b).abs() < 1e-6, "prediction drifted: {a} vs {b}");
    }
}

#[test]
fn checkpoint_architecture_mismatch_detected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = build_model::<f32>(&PadModelConfig::new(Architecture::Resnet18Binary), 1).unwrap();
    save_checkpoint(&path, &model).unwrap();

    // Corrupt the magic.
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xFF;
    std::fs::write(&path, &bytes).unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn mixed_forward_drop_tail_keeps_source_rows_only() {
    let cfg = PadModelConfig {
        mixstyle: Some(MixStyleConfig {
            apply_probability: 1.0,
            ..MixStyleConfig::default()
        }),
        ..PadModelConfig::new(Architecture::Resnet18Binary)
    };
    let mut model = build_model::<f32>(&cfg, 13).unwrap();
    let images = random_images(4, 14);
    let tape = Tape::new(true);
    let x = tape.input(images);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = model
        .forward(
            &tape,
            x,
            ForwardMode::TrainMixed {
                n_source: 2,
                rng: &mut rng,
                drop_target_tail: true,
            },
        )
        .unwrap();
    assert_eq!(tape.value(out.binary_prob).shape(), &[2, 1]);
    assert_eq!(tape.value(out.features).shape()[0], 2);
}

#[test]
fn mixed_forward_keep_tail_covers_full_batch() {
    let cfg = PadModelConfig {
        mixstyle: Some(MixStyleConfig {
            apply_probability: 1.0,
            ..MixStyleConfig::default()
        }),
        ..PadModelConfig::new(Architecture::Pixbis)
    };
    let mut model = build_model::<f32>(&cfg, 15).unwrap();
    let images = random_images(4, 16);
    let tape = Tape::new(true);
    let x = tape.input(images);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = model
        .forward(
            &tape,
            x,
            ForwardMode::TrainMixed {
                n_source: 2,
                rng: &mut rng,
                drop_target_tail: false,
            },
        )
        .unwrap();
    assert_eq!(tape.value(out.binary_prob).shape(), &[4, 1]);
    assert_eq!(tape.value(out.pixel_logits.unwrap()).shape(), &[4, 1, 14, 14]);
}
