//! Training configuration: TOML file, dotted-path overrides, environment
//! overrides. Precedence: CLI `--set` > environment > file > defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::AugmentationConfig;
use crate::error::{Error, Result};
use crate::models::{Architecture, PadModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Labeled source pool only.
    SourceOnly,
    /// Labeled source pool plus an unlabeled target pool; each batch is half
    /// source and half target, feature statistics are mixed at the insertion
    /// points, and the loss covers the source half only.
    MixstyleDa,
    /// Two labeled pools merged into one training set.
    Combined,
    /// Two labeled pools, batches split half/half, statistics mixed from the
    /// first pool onto the second; the loss covers all labeled samples.
    CombinedMixstyle,
}

impl TrainMode {
    pub fn needs_second_pool(&self) -> bool {
        !matches!(self, TrainMode::SourceOnly)
    }

    pub fn uses_mixing(&self) -> bool {
        matches!(self, TrainMode::MixstyleDa | TrainMode::CombinedMixstyle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub source_manifests: Vec<PathBuf>,
    /// Second pool: unlabeled target for `mixstyle_da`, the authentic
    /// labeled pool for the combined modes.
    pub target_manifest: Option<PathBuf>,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_gamma: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Face-crop margin (fraction per side).
    pub crop_margin: f64,
    pub model: PadModelConfig,
    pub augmentation: AugmentationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::SourceOnly,
            source_manifests: Vec::new(),
            target_manifest: None,
            lr0: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_gamma: 0.998,
            batch_size: 128,
            epochs: 70,
            seed: 0,
            crop_margin: 0.0,
            model: PadModelConfig::new(Architecture::Resnet18Binary),
            augmentation: AugmentationConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.source_manifests.is_empty() {
            return Err(Error::Config("source_manifests must not be empty".into()));
        }
        if self.mode.needs_second_pool() && self.target_manifest.is_none() {
            return Err(Error::Config(format!(
                "mode {:?} requires target_manifest",
                self.mode
            )));
        }
        if self.mode.uses_mixing() && self.model.mixstyle.is_none() {
            return Err(Error::Config(format!(
                "mode {:?} requires model.mixstyle to be configured",
                self.mode
            )));
        }
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return Err(Error::Config("batch_size must be positive and even".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.lr0 <= 0.0 {
            return Err(Error::Config("lr0 must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if self.lr_gamma <= 0.0 || self.lr_gamma > 1.0 {
            return Err(Error::Config("lr_gamma must be in (0, 1]".into()));
        }
        if self.crop_margin < 0.0 {
            return Err(Error::Config("crop_margin must be >= 0".into()));
        }
        self.model.validate()?;
        self.augmentation.validate()?;
        Ok(())
    }
}

/// Parses `key=value`, splitting the key on dots.
fn parse_override(spec: &str) -> Result<(Vec<String>, String)> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' must be key=value")))?;
    if key.is_empty() {
        return Err(Error::Config(format!("override '{spec}' has an empty key")));
    }
    Ok((key.split('.').map(str::to_string).collect(), value.to_string()))
}

/// Interprets an override value as TOML (so `true`, `3`, `0.5`, arrays and
/// quoted strings all work); bare words fall back to strings.
fn toml_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    if let Ok(table) = wrapped.parse::<toml::Table>() {
        if let Some(v) = table.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.to_string())
}

fn set_path(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (head, rest) = path.split_first().expect("non-empty path");
    if rest.is_empty() {
        root.insert(head.clone(), value);
        return Ok(());
    }
    let entry = root
        .entry(head.clone())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry.as_table_mut() {
        Some(t) => set_path(t, rest, value),
        None => Err(Error::Config(format!(
            "override path segment '{head}' is not a table"
        ))),
    }
}

/// Applies dotted `key=value` overrides onto a TOML table.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for spec in overrides {
        let (path, raw) = parse_override(spec)?;
        set_path(table, &path, toml_value(&raw))?;
    }
    Ok(())
}

/// Environment overrides: `{prefix}{KEY}` with `__` as the path separator,
/// e.g. `PADKIT_MODEL__ARCHITECTURE=pixbis` sets `model.architecture`.
pub fn apply_env_overrides(
    table: &mut toml::Table,
    prefix: &str,
    env: impl Iterator<Item = (String, String)>,
) -> Result<()> {
    for (key, value) in env {
        let Some(rest) = key.strip_prefix(prefix) else {
            continue;
        };
        if rest.is_empty() {
            continue;
        }
        let path: Vec<String> = rest
            .split("__")
            .map(|s| s.to_ascii_lowercase())
            .collect();
        set_path(table, &path, toml_value(&value))?;
    }
    Ok(())
}

/// Loads a training config with full precedence handling:
/// defaults < file < environment (`PADKIT_…`) < `--set` overrides.
pub fn load_train_config(
    path: Option<&Path>,
    overrides: &[String],
    env: impl Iterator<Item = (String, String)>,
) -> Result<TrainConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| Error::Config(format!("config {} is not valid TOML: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    apply_env_overrides(&mut table, "PADKIT_", env)?;
    apply_overrides(&mut table, overrides)?;
    let cfg: TrainConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(format!("invalid training config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_recipe() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr0, 0.01);
        assert_eq!(cfg.momentum, 0.9);
        assert_eq!(cfg.weight_decay, 5e-4);
        assert_eq!(cfg.lr_gamma, 0.998);
        assert_eq!(cfg.batch_size, 128);
        assert_eq!(cfg.epochs, 70);
    }

    #[test]
    fn mixstyle_da_without_target_rejected() {
        let cfg = TrainConfig {
            mode: TrainMode::MixstyleDa,
            source_manifests: vec![PathBuf::from("a.csv")],
            model: PadModelConfig {
                mixstyle: Some(crate::mixstyle::MixStyleConfig::default()),
                ..PadModelConfig::new(Architecture::Resnet18Binary)
            },
            ..TrainConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn mixstyle_da_without_mixstyle_config_rejected() {
        let cfg = TrainConfig {
            mode: TrainMode::MixstyleDa,
            source_manifests: vec![PathBuf::from("a.csv")],
            target_manifest: Some(PathBuf::from("t.csv")),
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn override_precedence_cli_over_env_over_file() {
        let mut table: toml::Table = concat!(
            "lr0 = 0.5\n",
            "epochs = 3\n",
            "batch_size = 10\n",
            "source_manifests = [\"m.csv\"]\n",
        )
        .parse()
        .unwrap();
        let env = vec![
            ("PADKIT_LR0".to_string(), "0.25".to_string()),
            ("PADKIT_EPOCHS".to_string(), "7".to_string()),
        ];
        apply_env_overrides(&mut table, "PADKIT_", env.into_iter()).unwrap();
        apply_overrides(&mut table, &["lr0=0.125".to_string()]).unwrap();
        let cfg: TrainConfig = toml::Value::Table(table).try_into().unwrap();
        assert_eq!(cfg.lr0, 0.125); // CLI wins
        assert_eq!(cfg.epochs, 7); // env beats file
        assert_eq!(cfg.batch_size, 10); // file beats default
        assert_eq!(cfg.momentum, 0.9); // default
    }

    #[test]
    fn nested_override_paths() {
        let mut table = toml::Table::new();
        apply_overrides(
            &mut table,
            &[
                "model.architecture=\"pixbis\"".to_string(),
                "model.mixstyle.alpha=0.3".to_string(),
            ],
        )
        .unwrap();
        let cfg: TrainConfig = toml::Value::Table(table).try_into().unwrap();
        assert_eq!(cfg.model.architecture, Architecture::Pixbis);
        assert_eq!(cfg.model.mixstyle.unwrap().alpha, 0.3);
    }

    #[test]
    fn bare_string_override_needs_no_quotes() {
        let mut table = toml::Table::new();
        apply_overrides(&mut table, &["mode=source_only".to_string()]).unwrap();
        let cfg: TrainConfig = toml::Value::Table(table).try_into().unwrap();
        assert_eq!(cfg.mode, TrainMode::SourceOnly);
    }
}
