//! Task labels, ranking metrics, prompt-ensemble zero-shot scoring and
//! linear probes on frozen series features.

mod labels;
mod metrics;
mod probe;
mod zero_shot;

pub use labels::{label_decompensation, label_mortality, label_split, LabelConfig, Task, TaskInstance};
pub use metrics::{auprc, auroc};
pub use probe::{fit_linear_probe, ProbeConfig, ProbeModel};
pub use zero_shot::{
    binary_softmax, prompt_prototypes, zero_shot_probability, zero_shot_scores, PromptEnsemble, PromptPrototypes,
};

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PatientStay;
use crate::encoders::{ContrastiveModel, EncoderError};
use crate::sampling::cut_window;

#[derive(Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("{0}")]
    Validation(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub labels: LabelConfig,
    pub probe: ProbeConfig,
    /// Softmax temperature of zero-shot scoring.
    pub zero_shot_temperature: f64,
    pub tasks: Vec<Task>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            labels: LabelConfig::default(),
            probe: ProbeConfig::default(),
            zero_shot_temperature: 1.0,
            tasks: Task::ALL.to_vec(),
        }
    }
}

/// Frozen GRU features and unit-norm shared-space embeddings of a set of
/// task instances.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceEmbeddings {
    pub features: Array2<f64>,
    pub h_s: Array2<f64>,
}

/// Stacks the input windows of `instances`. Only hours before each
/// instance's `end_hour` are read.
pub fn instance_windows(stays: &[PatientStay], instances: &[TaskInstance]) -> Result<Array3<f64>, EvaluationError> {
    let Some(first) = instances.first() else {
        return Ok(Array3::zeros((0, 0, 0)));
    };
    let d_v = stays[first.stay_index].n_vars();
    let mut out = Array3::zeros((instances.len(), first.length, d_v));
    for (mut slot, inst) in out.outer_iter_mut().zip(instances) {
        if inst.length != first.length {
            return Err(EvaluationError::Validation("instances mix window lengths".into()));
        }
        let w = cut_window(&stays[inst.stay_index].vitals, inst.end_hour as f64, inst.length)
            .map_err(|e| EvaluationError::Validation(e.to_string()))?;
        slot.assign(&w);
    }
    Ok(out)
}

const EMBED_CHUNK: usize = 2048;

/// Encodes instances in chunks; chunks run in parallel.
pub fn embed_instances(
    model: &ContrastiveModel,
    stays: &[PatientStay],
    instances: &[TaskInstance],
) -> Result<InstanceEmbeddings, EvaluationError> {
    let hidden = model.series.hidden_dim();
    let shared = model.proj_series.output_dim();
    let parts: Vec<Result<(Array2<f64>, Array2<f64>), EvaluationError>> = instances
        .par_chunks(EMBED_CHUNK)
        .map(|chunk| {
            let x = instance_windows(stays, chunk)?;
            let f = model.encode_series_batch(x.view())?;
            let h = model.project_series(f.view())?;
            Ok((f, h))
        })
        .collect();
    let mut features = Array2::zeros((0, hidden));
    let mut h_s = Array2::zeros((0, shared));
    for part in parts {
        let (f, h) = part?;
        features.append(Axis(0), f.view()).expect("same width");
        h_s.append(Axis(0), h.view()).expect("same width");
    }
    Ok(InstanceEmbeddings { features, h_s })
}

pub fn instance_labels(instances: &[TaskInstance]) -> Vec<bool> {
    instances.iter().map(|i| i.label).collect()
}
