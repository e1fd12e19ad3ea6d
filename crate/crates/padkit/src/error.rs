use std::path::PathBuf;

/// Crate-wide error type.
///
/// Variants are grouped by the stage that produced them so callers (the CLI
/// in particular) can map failures onto distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration: unknown architecture, missing target manifest,
    /// contradictory options, malformed config file or override.
    #[error("config error: {0}")]
    Config(String),

    /// A manifest row failed to parse or violated a row invariant.
    #[error("manifest {path}: row {row}: {message}")]
    Manifest {
        path: PathBuf,
        row: usize,
        message: String,
    },

    /// Data loading or validation failure outside a specific manifest row.
    #[error("data error: {0}")]
    Data(String),

    /// Metric computation rejected its input (e.g. single-class score set).
    #[error("metrics error: {0}")]
    Metrics(String),

    /// Tensor shape mismatch inside the model or mixing layer.
    #[error("shape error: {0}")]
    Shape(String),

    /// Checkpoint file is missing, corrupt, or incompatible with the model.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Training aborted: loss was non-finite for too many consecutive steps.
    #[error("training diverged: loss non-finite for {consecutive} consecutive steps")]
    Diverged { consecutive: usize },

    #[error("reporting error: {0}")]
    Reporting(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
