//! Cross-dataset protocol harness: one trained model per scenario,
//! evaluated on the held-out dataset.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{load_manifest, FrameDecoder};
use crate::error::{Error, Result};
use crate::metrics::ThresholdPolicy;
use crate::training::{evaluate_model, train, TrainConfig, TrainMode};

/// One scenario like `C->I`: train datasets, a disjoint test dataset, and
/// (for the combined modes) the supplementary labeled pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub name: String,
    pub train_dataset_ids: Vec<String>,
    pub test_dataset_id: String,
    #[serde(default)]
    pub supplement_dataset_ids: Option<Vec<String>>,
}

impl ProtocolSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_dataset_ids.is_empty() {
            return Err(Error::Config(format!(
                "protocol '{}': train_dataset_ids must not be empty",
                self.name
            )));
        }
        if self.train_dataset_ids.contains(&self.test_dataset_id) {
            return Err(Error::Config(format!(
                "protocol '{}': test dataset '{}' appears in the train datasets",
                self.name, self.test_dataset_id
            )));
        }
        Ok(())
    }
}

/// Maps dataset ids to manifest files.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetRegistry {
    pub manifests: BTreeMap<String, PathBuf>,
}

impl DatasetRegistry {
    pub fn manifest_path(&self, dataset_id: &str) -> Result<&PathBuf> {
        self.manifests.get(dataset_id).ok_or_else(|| {
            Error::Config(format!("dataset id '{dataset_id}' is not registered"))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRow {
    pub name: String,
    /// Fractions in `[0, 1]`; rendering converts to percent.
    pub hter: f64,
    pub auc: f64,
}

#[derive(Debug, Clone)]
pub enum ProtocolOutcome {
    Done(ProtocolRow),
    Failed { name: String, error: String },
}

#[derive(Debug, Clone, Default)]
pub struct ProtocolResults {
    pub outcomes: Vec<ProtocolOutcome>,
}

impl ProtocolResults {
    pub fn succeeded(&self) -> Vec<&ProtocolRow> {
        self.outcomes
            .iter()
            .filter_map(|o| match o {
                ProtocolOutcome::Done(r) => Some(r),
                ProtocolOutcome::Failed { .. } => None,
            })
            .collect()
    }

    pub fn any_failed(&self) -> bool {
        self.outcomes
            .iter()
            .any(|o| matches!(o, ProtocolOutcome::Failed { .. }))
    }
}

/// Builds the per-scenario training config from the template.
///
/// Mode wiring: `source_only` trains on the train datasets; `mixstyle_da`
/// additionally uses the test dataset as the unlabeled statistics target;
/// the combined modes train on the supplementary pool (restyled side)
/// together with the single authentic train dataset.
fn spec_config(
    spec: &ProtocolSpec,
    registry: &DatasetRegistry,
    template: &TrainConfig,
) -> Result<TrainConfig> {
    spec.validate()?;
    let mut cfg = template.clone();
    match cfg.mode {
        TrainMode::SourceOnly => {
            cfg.source_manifests = spec
                .train_dataset_ids
                .iter()
                .map(|id| registry.manifest_path(id).cloned())
                .collect::<Result<_>>()?;
            cfg.target_manifest = None;
        }
        TrainMode::MixstyleDa => {
            cfg.source_manifests = spec
                .train_dataset_ids
                .iter()
                .map(|id| registry.manifest_path(id).cloned())
                .collect::<Result<_>>()?;
            cfg.target_manifest = Some(registry.manifest_path(&spec.test_dataset_id)?.clone());
        }
        TrainMode::Combined | TrainMode::CombinedMixstyle => {
            let supplement = spec.supplement_dataset_ids.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "protocol '{}': combined modes need supplement_dataset_ids",
                    spec.name
                ))
            })?;
            if spec.train_dataset_ids.len() != 1 {
                return Err(Error::Config(format!(
                    "protocol '{}': combined modes support exactly one train dataset",
                    spec.name
                )));
            }
            cfg.source_manifests = supplement
                .iter()
                .map(|id| registry.manifest_path(id).cloned())
                .collect::<Result<_>>()?;
            cfg.target_manifest =
                Some(registry.manifest_path(&spec.train_dataset_ids[0])?.clone());
        }
    }
    Ok(cfg)
}

/// Trains and evaluates one model per scenario. A failing scenario is
/// recorded and the remaining scenarios still run.
pub fn run_protocols(
    specs: &[ProtocolSpec],
    registry: &DatasetRegistry,
    template: &TrainConfig,
    decoder: &dyn FrameDecoder,
    policy: ThresholdPolicy,
) -> ProtocolResults {
    let mut results = ProtocolResults::default();
    for spec in specs {
        match run_one(spec, registry, template, decoder, policy) {
            Ok(row) => results.outcomes.push(ProtocolOutcome::Done(row)),
            Err(e) => results.outcomes.push(ProtocolOutcome::Failed {
                name: spec.name.clone(),
                error: e.to_string(),
            }),
        }
    }
    results
}

fn run_one(
    spec: &ProtocolSpec,
    registry: &DatasetRegistry,
    template: &TrainConfig,
    decoder: &dyn FrameDecoder,
    policy: ThresholdPolicy,
) -> Result<ProtocolRow> {
    let cfg = spec_config(spec, registry, template)?;
    let outcome = train(&cfg, decoder)?;
    let mut model = outcome.model;
    let test = load_manifest(registry.manifest_path(&spec.test_dataset_id)?)?;
    let eval = evaluate_model(&mut model, &test, decoder, cfg.crop_margin, policy)?;
    Ok(ProtocolRow {
        name: spec.name.clone(),
        hter: eval.report.hter,
        auc: eval.report.auc,
    })
}
