//! Training orchestration: the SGD recipe, the three training modes, and
//! the cross-dataset protocol harness.

pub mod config;
mod evaluate;
mod protocols;
mod run;

pub use config::{apply_env_overrides, apply_overrides, load_train_config, TrainConfig, TrainMode};
pub use evaluate::{evaluate_model, score_manifest, EvalOutcome};
pub use protocols::{
    run_protocols, DatasetRegistry, ProtocolOutcome, ProtocolResults, ProtocolRow, ProtocolSpec,
};
pub use run::{train, write_training_log, DivergenceGuard, EpochLog, TrainOutcome};
