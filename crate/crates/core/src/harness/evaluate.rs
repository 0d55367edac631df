use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::checkpoint::{write_atomic, Checkpoint};
use super::train::prepare_split;
use super::HarnessError;
use crate::corpus::{Dataset, PatientStay, Split};
use crate::encoders::ContrastiveModel;
use crate::evaluation::{
    auprc, auroc, embed_instances, fit_linear_probe, instance_labels, label_split, prompt_prototypes, zero_shot_scores,
    EvaluationConfig, InstanceEmbeddings, ProbeModel, PromptEnsemble, Task,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Probe,
    ZeroShot,
}

impl EvalMode {
    pub const ALL: [EvalMode; 2] = [EvalMode::Probe, EvalMode::ZeroShot];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Probe => "probe",
            EvalMode::ZeroShot => "zero_shot",
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EvalMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s || (s == "zeroshot" && *m == EvalMode::ZeroShot))
            .ok_or_else(|| HarnessError::Config(format!("unknown evaluation mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub task: Task,
    pub mode: EvalMode,
    pub split: Split,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub checkpoint_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub records: Vec<MetricRecord>,
}

impl MetricsFile {
    pub fn get(&self, task: Task, mode: EvalMode, metric: &str) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.task == task && r.mode == mode && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self).expect("metrics serialise");
        write_atomic(path, text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }
}

/// Scores and labels of one task on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskScores {
    pub labels: Vec<bool>,
    pub scores: Vec<f64>,
}

impl TaskScores {
    pub fn auprc(&self) -> Result<f64, HarnessError> {
        Ok(auprc(&self.scores, &self.labels)?)
    }

    pub fn auroc(&self) -> Result<f64, HarnessError> {
        Ok(auroc(&self.scores, &self.labels)?)
    }
}

/// Task labels and frozen embeddings of one split.
pub struct TaskData {
    pub labels: Vec<bool>,
    pub embeddings: InstanceEmbeddings,
}

pub fn task_data(
    model: &ContrastiveModel,
    stays: &[PatientStay],
    task: Task,
    window: usize,
    cfg: &EvaluationConfig,
) -> Result<TaskData, HarnessError> {
    let instances = label_split(task, stays, window, &cfg.labels);
    Ok(TaskData {
        labels: instance_labels(&instances),
        embeddings: embed_instances(model, stays, &instances)?,
    })
}

pub fn zero_shot_task_scores(model: &ContrastiveModel, data: &TaskData, task: Task, cfg: &crate::harness::RunConfig) -> Result<TaskScores, HarnessError> {
    let protos = prompt_prototypes(model, &cfg.encoder.provider(), &PromptEnsemble::default_for(task))?;
    Ok(TaskScores {
        labels: data.labels.clone(),
        scores: zero_shot_scores(data.embeddings.h_s.view(), &protos, cfg.evaluation.zero_shot_temperature),
    })
}

pub fn probe_task_scores(probe: &ProbeModel, data: &TaskData) -> TaskScores {
    TaskScores {
        labels: data.labels.clone(),
        scores: probe.predict(data.embeddings.features.view()),
    }
}

/// Per (task, mode) AuPRC and AuROC on the test split. Probes are fitted on
/// the train split before the test split is first read.
pub fn evaluate(ckpt: &Checkpoint, data: &Dataset, modes: &[EvalMode], checkpoint_hash: &str) -> Result<MetricsFile, HarnessError> {
    let cfg = &ckpt.config;
    let window = cfg.sampling.window;
    let tasks = &cfg.evaluation.tasks;
    let mut probes = BTreeMap::new();
    if modes.contains(&EvalMode::Probe) {
        let train = prepare_split(data, Split::Train, &ckpt.scaler)?;
        for &task in tasks {
            let td = task_data(&ckpt.model, &train, task, window, &cfg.evaluation)?;
            probes.insert(task, fit_linear_probe(td.embeddings.features.view(), &td.labels, &cfg.evaluation.probe)?);
        }
    }
    let test = prepare_split(data, Split::Test, &ckpt.scaler)?;
    let mut records = Vec::new();
    for &task in tasks {
        let td = task_data(&ckpt.model, &test, task, window, &cfg.evaluation)?;
        for &mode in modes {
            let scores = match mode {
                EvalMode::Probe => probe_task_scores(&probes[&task], &td),
                EvalMode::ZeroShot => zero_shot_task_scores(&ckpt.model, &td, task, cfg)?,
            };
            for (metric, value) in [("auprc", scores.auprc()?), ("auroc", scores.auroc()?)] {
                records.push(MetricRecord {
                    task,
                    mode,
                    split: Split::Test,
                    metric: metric.into(),
                    value,
                    seed: cfg.seed,
                    checkpoint_hash: checkpoint_hash.into(),
                });
            }
        }
    }
    Ok(MetricsFile { records })
}
