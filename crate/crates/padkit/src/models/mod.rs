//! The two PAD classifiers and their losses.
//!
//! `resnet18_binary` is an 18-layer residual network trained from scratch
//! with a single sigmoid output head. `pixbis` applies pixel-wise binary
//! supervision on a 14×14 map produced by the first two dense blocks (with
//! their transitions) of a 121-layer densely connected backbone, plus a
//! binary head over the flattened map.

mod checkpoint;
pub mod losses;
mod pixbis;
mod resnet;

pub use checkpoint::{copy_parameters, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use pixbis::PIXEL_MAP_SIDE;

use ndarray::ArrayD;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixstyle::{insertion_points, InsertionPoint, MixStyleConfig};
use crate::nn::{Elem, Initializer, ParamStore, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Resnet18Binary,
    Pixbis,
}

impl Architecture {
    pub fn as_str(&self) -> &'static str {
        match self {
            Architecture::Resnet18Binary => "resnet18_binary",
            Architecture::Pixbis => "pixbis",
        }
    }

    /// Penultimate feature width (global-pooled backbone output).
    pub fn feature_dim(&self) -> usize {
        match self {
            Architecture::Resnet18Binary => 512,
            Architecture::Pixbis => 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    BinaryHead,
    PixelMapMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PadModelConfig {
    pub architecture: Architecture,
    /// Pretrained backbone initialization. No weights ship with this build;
    /// requesting it is an error (initialize from a checkpoint instead).
    #[serde(default)]
    pub pretrained: bool,
    /// Defaults per architecture: `binary_head` for the residual net,
    /// `pixel_map_mean` for pixbis.
    #[serde(default)]
    pub score_source: Option<ScoreSource>,
    #[serde(default)]
    pub mixstyle: Option<MixStyleConfig>,
}

impl PadModelConfig {
    pub fn new(architecture: Architecture) -> Self {
        Self {
            architecture,
            pretrained: false,
            score_source: None,
            mixstyle: None,
        }
    }

    pub fn resolved_score_source(&self) -> ScoreSource {
        self.score_source.unwrap_or(match self.architecture {
            Architecture::Resnet18Binary => ScoreSource::BinaryHead,
            Architecture::Pixbis => ScoreSource::PixelMapMean,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolved_score_source() == ScoreSource::PixelMapMean
            && self.architecture != Architecture::Pixbis
        {
            return Err(Error::Config(
                "score_source pixel_map_mean is only valid for the pixbis architecture".into(),
            ));
        }
        if self.pretrained {
            return Err(Error::Config(
                "no pretrained weights are bundled; set pretrained = false and load a checkpoint instead".into(),
            ));
        }
        if let Some(ms) = &self.mixstyle {
            ms.validate()?;
        }
        Ok(())
    }
}

/// Per-sample inference output.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// Probability of bona fide, in `[0, 1]`, under the configured score
    /// source.
    pub score: f64,
    /// 14×14 pixel-probability map (pixbis only).
    pub pixel_map: Option<ndarray::Array2<f64>>,
    /// Penultimate feature vector (for embedding plots).
    pub features: Vec<f64>,
}

/// Forward-pass mode.
pub enum ForwardMode<'a> {
    /// Frozen statistics, mixing removed.
    Eval,
    /// Batch statistics; no domain split, mixing inactive.
    Train,
    /// Batch rows `[0, n_source)` are the source half; the remaining rows
    /// supply target feature statistics for mixing. With `drop_target_tail`
    /// the target rows stop flowing after the last insertion point (their
    /// outputs are unused in domain-adaptation training).
    TrainMixed {
        n_source: usize,
        rng: &'a mut ChaCha8Rng,
        drop_target_tail: bool,
    },
}

/// Graph handles produced by one forward pass. Rows cover the full batch,
/// except under `TrainMixed { drop_target_tail: true, .. }` where only the
/// source rows remain.
pub struct ModelOutput {
    /// Pre-sigmoid binary logit, `(B, 1)`.
    pub logit: Var,
    /// Sigmoid of `logit`, `(B, 1)`.
    pub binary_prob: Var,
    /// Pre-sigmoid pixel logits `(B, 1, 14, 14)` (pixbis only).
    pub pixel_logits: Option<Var>,
    /// Sigmoid pixel map (pixbis only).
    pub pixel_map: Option<Var>,
    /// Global-pooled penultimate features `(B, D)`.
    pub features: Var,
}

enum ArchModel {
    ResNet(resnet::ResNet18),
    PixBis(pixbis::PixBisNet),
}

/// A PAD classifier: parameters plus architecture wiring.
pub struct PadModel<F: Elem> {
    pub cfg: PadModelConfig,
    pub store: ParamStore<F>,
    arch: ArchModel,
    mix_points: Vec<InsertionPoint>,
}

/// Builds a model with seeded initialization.
pub fn build_model<F: Elem>(cfg: &PadModelConfig, seed: u64) -> Result<PadModel<F>> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let mut init = Initializer::from_seed(seed);
    let arch = match cfg.architecture {
        Architecture::Resnet18Binary => {
            ArchModel::ResNet(resnet::ResNet18::new(&mut store, &mut init))
        }
        Architecture::Pixbis => ArchModel::PixBis(pixbis::PixBisNet::new(&mut store, &mut init)),
    };
    let mix_points = match &cfg.mixstyle {
        None => Vec::new(),
        Some(ms) if ms.insertion_points.is_empty() => {
            insertion_points(cfg.architecture.as_str())?
        }
        Some(ms) => ms.insertion_points.clone(),
    };
    Ok(PadModel {
        cfg: cfg.clone(),
        store,
        arch,
        mix_points,
    })
}

impl<F: Elem> PadModel<F> {
    pub fn architecture(&self) -> Architecture {
        self.cfg.architecture
    }

    pub fn mix_points(&self) -> &[InsertionPoint] {
        &self.mix_points
    }

    /// Runs the network on an input node of shape `(B, 3, 224, 224)`.
    pub fn forward(&mut self, tape: &Tape<F>, x: Var, mode: ForwardMode<'_>) -> Result<ModelOutput> {
        let mix = match &mode {
            ForwardMode::TrainMixed { .. } => self.cfg.mixstyle.clone(),
            _ => None,
        };
        let ctx = ForwardCtx {
            mode,
            mix_cfg: mix,
            mix_points: &self.mix_points,
        };
        match &self.arch {
            ArchModel::ResNet(net) => net.forward(tape, &mut self.store, x, ctx),
            ArchModel::PixBis(net) => net.forward(tape, &mut self.store, x, ctx),
        }
    }

    /// Inference on a batch tensor: no gradients, frozen statistics.
    pub fn predict_tensor(&mut self, images: &ArrayD<F>) -> Result<Vec<Prediction>> {
        let tape = Tape::new(false);
        let x = tape.input(images.clone());
        let out = self.forward(&tape, x, ForwardMode::Eval)?;
        let score_source = self.cfg.resolved_score_source();
        let probs = tape.value(out.binary_prob);
        let feats = tape.value(out.features);
        let maps = out.pixel_map.map(|m| tape.value(m));
        let batch = images.shape()[0];
        let fdim = feats.len() / batch.max(1);
        let mut predictions = Vec::with_capacity(batch);
        for bi in 0..batch {
            let pixel_map = maps.as_ref().map(|m| {
                let (h, w) = (m.shape()[2], m.shape()[3]);
                ndarray::Array2::from_shape_fn((h, w), |(i, j)| m[[bi, 0, i, j]].to_f64())
            });
            let score = match score_source {
                ScoreSource::BinaryHead => probs[[bi, 0]].to_f64(),
                ScoreSource::PixelMapMean => {
                    let m = pixel_map.as_ref().expect("pixbis produces a pixel map");
                    m.iter().sum::<f64>() / m.len() as f64
                }
            };
            let features = (0..fdim).map(|d| feats[[bi, d]].to_f64()).collect();
            predictions.push(Prediction {
                score,
                pixel_map,
                features,
            });
        }
        Ok(predictions)
    }
}

/// Dispatch on the configured score source for a single image tensor
/// `(1, 3, 224, 224)` or a batch.
pub fn predict_score<F: Elem>(model: &mut PadModel<F>, images: &ArrayD<F>) -> Result<Vec<f64>> {
    Ok(model
        .predict_tensor(images)?
        .into_iter()
        .map(|p| p.score)
        .collect())
}

/// Internal plumbing handed down to the architecture forwards.
pub(crate) struct ForwardCtx<'a> {
    pub mode: ForwardMode<'a>,
    pub mix_cfg: Option<MixStyleConfig>,
    pub mix_points: &'a [InsertionPoint],
}

impl ForwardCtx<'_> {
    pub fn training(&self) -> bool {
        !matches!(self.mode, ForwardMode::Eval)
    }

    /// Applies mixing at `point` if configured. Returns the (possibly
    /// restyled/reduced) map plus the source-row count when the target tail
    /// was dropped here.
    pub fn maybe_mix<F: Elem>(
        &mut self,
        tape: &Tape<F>,
        x: Var,
        point: InsertionPoint,
    ) -> Result<Var> {
        let Some(cfg) = self.mix_cfg.clone() else {
            return Ok(x);
        };
        if !self.mix_points.contains(&point) {
            return Ok(x);
        }
        let ForwardMode::TrainMixed {
            n_source,
            ref mut rng,
            drop_target_tail,
        } = self.mode
        else {
            return Ok(x);
        };
        let batch = tape.value(x).shape()[0];
        if n_source == 0 || n_source > batch {
            return Err(Error::Shape(format!(
                "invalid domain split: {n_source} source rows in a batch of {batch}"
            )));
        }
        if n_source == batch {
            return Err(Error::Shape(
                "mixing requires a non-empty target half in the batch".into(),
            ));
        }
        let src = crate::nn::ops::slice_batch(tape, x, 0, n_source);
        let tgt = crate::nn::ops::slice_batch(tape, x, n_source, batch - n_source);
        let restyled = crate::mixstyle::mixstyle_forward(tape, src, tgt, &cfg, rng, true)?;
        let last = *self.mix_points.last().expect("non-empty points");
        if drop_target_tail && point == last {
            Ok(restyled)
        } else {
            Ok(crate::nn::ops::concat(tape, &[restyled, tgt], 0))
        }
    }
}
