use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::supervised::SupervisedConfig;
use super::HarnessError;
use crate::corpus::{Category, SynthConfig};
use crate::encoders::EncoderConfig;
use crate::evaluation::{EvaluationConfig, Task};
use crate::nn::AdamConfig;
use crate::objective::{LossConfig, LossVariant};
use crate::sampling::SamplingConfig;

/// Where the run's data comes from: a dataset directory, or else the
/// synthetic generator run in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub synth: SynthConfig,
    pub synth_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            synth: SynthConfig::default(),
            synth_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSelection {
    /// Keep the parameters after the last epoch.
    FinalEpoch,
    /// Keep the epoch with the best mean validation zero-shot AuPRC over
    /// `tasks`; stop after `patience` epochs without improvement.
    BestValidation { tasks: Vec<Task>, patience: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub window_sizes: Vec<usize>,
    pub n_seeds: usize,
    pub label_fractions: Vec<f64>,
    pub label_task: Task,
    pub supervised: SupervisedConfig,
    pub note_task: Task,
    /// Early-stopping patience, in epochs, for each note-type ablation run.
    pub note_patience: Option<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            window_sizes: vec![8, 16, 24, 48],
            n_seeds: 3,
            label_fractions: vec![0.01, 0.02, 0.05, 0.1, 0.25, 0.5, 1.0],
            label_task: Task::Decompensation,
            supervised: SupervisedConfig::default(),
            note_task: Task::Decompensation,
            note_patience: Some(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub loss_variant: LossVariant,
    /// Note categories used for pretraining; `None` allows all.
    pub categories: Option<Vec<Category>>,
    pub model_selection: ModelSelection,
    /// Compute validation zero-shot AuPRC after every epoch.
    pub validate_each_epoch: bool,
    pub data: DataConfig,
    pub sampling: SamplingConfig,
    pub encoder: EncoderConfig,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
    pub evaluation: EvaluationConfig,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 10,
            loss_variant: LossVariant::MmNcl,
            categories: None,
            model_selection: ModelSelection::FinalEpoch,
            validate_each_epoch: true,
            data: DataConfig::default(),
            sampling: SamplingConfig::default(),
            encoder: EncoderConfig::default(),
            loss: LossConfig::default(),
            optimizer: AdamConfig::default(),
            evaluation: EvaluationConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl RunConfig {
    /// The full-size settings: wider encoders, 512-stay batches, 30 epochs.
    pub fn full_scale() -> Self {
        let mut cfg = Self {
            epochs: 30,
            encoder: EncoderConfig::full_scale(),
            ..Self::default()
        };
        cfg.sampling.batch_stays = 512;
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        Self::from_toml_over(&Self::default(), text)
    }

    /// Parses `text` as overrides on top of `base`; keys the file leaves out
    /// keep `base`'s values.
    pub fn from_toml_over(base: &RunConfig, text: &str) -> Result<Self, HarnessError> {
        let cfg_err = |e: &dyn std::fmt::Display| HarnessError::Config(e.to_string());
        // The strict parse rejects unknown keys before anything is merged.
        toml::from_str::<RunConfig>(text).map_err(|e| cfg_err(&e))?;
        let overrides: toml::Table = toml::from_str(text).map_err(|e| cfg_err(&e))?;
        let mut merged = toml::Table::try_from(base).map_err(|e| cfg_err(&e))?;
        merge_tables(&mut merged, overrides);
        let cfg: RunConfig = merged.try_into().map_err(|e: toml::de::Error| cfg_err(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::load_over(&Self::default(), path)
    }

    pub fn load_over(base: &RunConfig, path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_over(base, &text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return bad("learning rate must be positive".into());
        }
        if self.sampling.window < 1 || self.sampling.batch_stays < 1 || self.sampling.notes_per_stay < 1 {
            return bad("window, batch_stays and notes_per_stay must be at least 1".into());
        }
        if self.evaluation.zero_shot_temperature <= 0.0 {
            return bad("zero-shot temperature must be positive".into());
        }
        if let Some(c) = &self.categories {
            if c.is_empty() {
                return bad("category list is empty".into());
            }
        }
        if let ModelSelection::BestValidation { tasks, .. } = &self.model_selection {
            if tasks.is_empty() {
                return bad("model selection needs at least one task".into());
            }
        }
        if self.ablation.window_sizes.contains(&0) || self.ablation.n_seeds < 1 {
            return bad("window sizes and n_seeds must be at least 1".into());
        }
        if self.ablation.label_fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return bad("label fractions must lie in (0, 1]".into());
        }
        self.sampling.target.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.encoder.validate()?;
        self.loss.validate()?;
        if self.data.path.is_none() {
            self.data.synth.validate()?;
        }
        Ok(())
    }

    pub fn allowed_categories(&self) -> BTreeSet<Category> {
        match &self.categories {
            Some(c) => c.iter().copied().collect(),
            None => Category::ALL.into_iter().collect(),
        }
    }
}

fn merge_tables(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge_tables(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}
