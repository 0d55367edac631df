//! Run configuration, pretraining, checkpoints, evaluation, the supervised
//! baseline and the ablation runners.

mod ablations;
mod checkpoint;
mod config;
mod evaluate;
mod plots;
mod results;
mod supervised;
mod train;

pub use ablations::{
    ablate_note_types, ablate_reduced_labels, ablate_window, present_categories, stratified_subsample, LabelCurve, LabelRow,
    LabelRun, MeanStd, NoteAblation, NoteCandidate, NoteStep, TaskSummary, WindowRow, WindowRun, WindowTable,
};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use config::{AblationConfig, DataConfig, ModelSelection, RunConfig};
pub use plots::{bar_chart_svg, line_chart_svg, write_csv, write_svg, Series};
pub use results::{RunRecord, RunRegistry};
pub use supervised::{supervised_scores, train_supervised, SupervisedConfig, SupervisedModel, SupervisedRun};
pub use evaluate::{
    evaluate, probe_task_scores, task_data, zero_shot_task_scores, EvalMode, MetricRecord, MetricsFile, TaskData, TaskScores,
};
pub use train::{load_dataset, prepare_split, pretrain, validation_auprc, EpochLog, Pretrained};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::encoders::EncoderError;
use crate::evaluation::EvaluationError;
use crate::objective::ObjectiveError;
use crate::sampling::{BatchIndex, SamplingError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch} ({} samples)", indices.len())]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        indices: Vec<BatchIndex>,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
}

impl HarnessError {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Checkpoint(_) => "checkpoint",
            HarnessError::NonFiniteLoss { .. } => "non_finite_loss",
            HarnessError::Corpus(_) => "corpus",
            HarnessError::Sampling(_) => "sampling",
            HarnessError::Encoder(_) => "encoder",
            HarnessError::Objective(_) => "objective",
            HarnessError::Evaluation(_) => "evaluation",
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
