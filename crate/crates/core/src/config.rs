//! Experiment configuration: dataset source, model grids, attack and
//! defense settings. A config plus a seed fully determines a run; the
//! config hash recorded in the run manifest covers every field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::d2tc::{AttackConfig, Mask};
use crate::fusion::FusionRule;
use crate::models::ModelFamily;
use crate::synth::SyntheticSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetConfig {
    Synthetic {
        spec: SyntheticSpec,
    },
    Csv {
        path: PathBuf,
        /// Preset name (`ton-iot`, `bot-iot`) or path to a mapping file.
        mapping: String,
    },
}

/// Hyperparameter grids. Each side draws one configuration per family
/// from these, seeded independently, so defender and attacker end up with
/// distinct random hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelGridConfig {
    pub families: Vec<ModelFamily>,
    pub knn_k: Vec<usize>,
    pub dt_max_depth: Vec<usize>,
    pub rf_trees: Vec<usize>,
    pub rf_max_depth: usize,
    pub gbt_rounds: Vec<usize>,
    pub gbt_learning_rate: Vec<f64>,
    pub gbt_max_depth: usize,
}

impl Default for ModelGridConfig {
    fn default() -> Self {
        ModelGridConfig {
            families: ModelFamily::ALL.to_vec(),
            knn_k: vec![3, 5, 7],
            dt_max_depth: vec![4, 8, 16],
            rf_trees: vec![25, 50, 100],
            rf_max_depth: 16,
            gbt_rounds: vec![50, 100],
            gbt_learning_rate: vec![0.1, 0.3],
            gbt_max_depth: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackSettings {
    pub rate_constant: f64,
    pub max_steps: usize,
    pub target_class: String,
    pub cumulative: bool,
    /// Mask sweep order as ids; defaults to 1..=7.
    pub mask_order: Vec<u8>,
}

impl Default for AttackSettings {
    fn default() -> Self {
        AttackSettings {
            rate_constant: 0.1,
            max_steps: 10,
            target_class: "benign".to_string(),
            cumulative: false,
            mask_order: (1..=7).collect(),
        }
    }
}

impl AttackSettings {
    pub fn to_attack_config(&self) -> Result<AttackConfig, ConfigError> {
        let mask_order = self
            .mask_order
            .iter()
            .map(|id| Mask::from_id(*id))
            .collect::<Result<Vec<Mask>, String>>()
            .map_err(ConfigError::Invalid)?;
        let config = AttackConfig {
            rate_constant: self.rate_constant,
            max_steps: self.max_steps,
            mask_order,
            target_class: self.target_class.clone(),
            cumulative: self.cumulative,
        };
        config.validate().map_err(ConfigError::Invalid)?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleSelection {
    Bayesian,
    DempsterShafer,
    Both,
}

impl RuleSelection {
    pub fn rules(self) -> Vec<FusionRule> {
        match self {
            RuleSelection::Bayesian => vec![FusionRule::Bayesian],
            RuleSelection::DempsterShafer => vec![FusionRule::DempsterShafer],
            RuleSelection::Both => vec![FusionRule::Bayesian, FusionRule::DempsterShafer],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseSettings {
    pub rule: RuleSelection,
    /// Fraction of the defender-side defense data used for sub-detector
    /// training; the rest calibrates the reliability weights.
    pub train_fraction: f64,
}

impl Default for DefenseSettings {
    fn default() -> Self {
        DefenseSettings {
            rule: RuleSelection::Both,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub models: ModelGridConfig,
    #[serde(default)]
    pub attack: AttackSettings,
    #[serde(default)]
    pub defense: DefenseSettings,
}

impl ExperimentConfig {
    /// Self-contained default: the desk-scale synthetic corpus.
    pub fn desk_default() -> ExperimentConfig {
        ExperimentConfig {
            seed: 1,
            output_dir: PathBuf::from("runs/default"),
            dataset: DatasetConfig::Synthetic {
                spec: SyntheticSpec::desk_default(),
            },
            models: ModelGridConfig::default(),
            attack: AttackSettings::default(),
            defense: DefenseSettings::default(),
        }
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.models.families.is_empty() {
            return Err(ConfigError::Invalid("no model families selected".to_string()));
        }
        let grids_ok = !self.models.knn_k.is_empty()
            && !self.models.dt_max_depth.is_empty()
            && !self.models.rf_trees.is_empty()
            && !self.models.gbt_rounds.is_empty()
            && !self.models.gbt_learning_rate.is_empty();
        if !grids_ok {
            return Err(ConfigError::Invalid("empty hyperparameter grid".to_string()));
        }
        if !(0.0..1.0).contains(&self.defense.train_fraction) || self.defense.train_fraction <= 0.0 {
            return Err(ConfigError::Invalid(
                "defense.train_fraction must be in (0, 1)".to_string(),
            ));
        }
        if let DatasetConfig::Synthetic { spec } = &self.dataset {
            spec.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.attack.to_attack_config()?;
        Ok(())
    }

    /// Hash over the canonical serialized config; part of the run
    /// manifest so reports are attributable to an exact configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
