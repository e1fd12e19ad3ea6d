//! Face presentation-attack-detection (PAD) training and cross-dataset
//! evaluation toolkit.
//!
//! The crate covers the full method layer of a synthetic-to-authentic PAD
//! study: manifest-driven data ingestion with frame sampling, face cropping
//! and reproducible augmentation ([`data`]); two PAD classifiers — an
//! 18-layer residual network with a binary head and a pixel-wise binary
//! supervision network built from the first two dense blocks of a 121-layer
//! densely connected backbone — with their losses ([`models`]); a
//! feature-statistics mixing layer for bridging the synthetic/authentic
//! domain gap ([`mixstyle`]); the training recipe and cross-dataset protocol
//! harness ([`training`]); ISO/IEC 30107-3 metrics with per-video score
//! fusion ([`metrics`]); and ROC/embedding/table reporting ([`reporting`]).
//!
//! Models are trained with the bundled CPU tensor engine ([`nn`]), which is
//! generic over `f32`/`f64` so every gradient path can be verified against
//! central finite differences at full double precision.

pub mod data;
pub mod error;
pub mod metrics;
pub mod mixstyle;
pub mod models;
pub mod nn;
pub mod reporting;
pub mod training;

pub use error::{Error, Result};
