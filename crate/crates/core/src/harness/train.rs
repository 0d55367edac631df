use std::collections::BTreeMap;
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelSelection, RunConfig};
use super::HarnessError;
use crate::corpus::{fit_scaler, generate_synthetic, preprocess, Dataset, PatientStay, Scaler, Split};
use crate::encoders::{ContrastiveModel, TextEmbedder};
use crate::evaluation::{
    auprc, embed_instances, instance_labels, label_split, prompt_prototypes, zero_shot_scores, PromptEnsemble, Task,
};
use crate::nn::{Adam, Parameters};
use crate::objective::contrastive_loss;
use crate::rng::rng_for;
use crate::sampling::{materialize_batch, plan_epoch};

// Stream identifiers for `rng_for`.
const STREAM_INIT: u64 = 1;
const STREAM_PLAN: u64 = 2;
const STREAM_TARGET: u64 = 3;
const STREAM_DROPOUT: u64 = 4;

/// Opens the configured dataset directory or generates the synthetic one.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, HarnessError> {
    match &cfg.data.path {
        Some(p) => Ok(Dataset::open(p)?),
        None => Ok(generate_synthetic(&cfg.data.synth, cfg.data.synth_seed)?.into_dataset()),
    }
}

/// Scaled and imputed copy of one split.
pub fn prepare_split(data: &Dataset, split: Split, scaler: &Scaler) -> Result<Vec<PatientStay>, HarnessError> {
    Ok(data.split(split)?.par_iter().map(|s| preprocess(s, scaler)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub batches: usize,
    pub temperature: f64,
    /// Validation zero-shot AuPRC per task.
    pub val_auprc: BTreeMap<Task, f64>,
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub model: ContrastiveModel,
    pub scaler: Scaler,
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub selected_epoch: usize,
    pub wall_clock_secs: f64,
}

/// Validation zero-shot AuPRC of `model` for each task. Tasks whose labels
/// are single-class on the split are left out.
pub fn validation_auprc(
    model: &ContrastiveModel,
    provider: &dyn TextEmbedder,
    val: &[PatientStay],
    tasks: &[Task],
    cfg: &RunConfig,
) -> Result<BTreeMap<Task, f64>, HarnessError> {
    let mut out = BTreeMap::new();
    for &task in tasks {
        let instances = label_split(task, val, cfg.sampling.window, &cfg.evaluation.labels);
        let labels = instance_labels(&instances);
        if !labels.iter().any(|&y| y) || labels.iter().all(|&y| y) {
            continue;
        }
        let emb = embed_instances(model, val, &instances)?;
        let protos = prompt_prototypes(model, provider, &PromptEnsemble::default_for(task))?;
        let scores = zero_shot_scores(emb.h_s.view(), &protos, cfg.evaluation.zero_shot_temperature);
        out.insert(task, auprc(&scores, &labels)?);
    }
    Ok(out)
}

fn aggregate(scores: &BTreeMap<Task, f64>, tasks: &[Task]) -> Option<f64> {
    let v: Vec<f64> = tasks.iter().filter_map(|t| scores.get(t).copied()).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Contrastive pretraining. Reads only the train and validation splits.
pub fn pretrain(cfg: &RunConfig, data: &Dataset) -> Result<Pretrained, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    let scaler = fit_scaler(data.split(Split::Train)?);
    let train = prepare_split(data, Split::Train, &scaler)?;
    if let Some(s) = train.first() {
        if s.n_vars() != cfg.encoder.input_dim {
            return Err(HarnessError::Config(format!(
                "data has {} variables but encoder.input_dim is {}",
                s.n_vars(),
                cfg.encoder.input_dim
            )));
        }
    }
    let selection_tasks: Vec<Task> = match &cfg.model_selection {
        ModelSelection::BestValidation { tasks, .. } => tasks.clone(),
        ModelSelection::FinalEpoch => cfg.evaluation.tasks.clone(),
    };
    let need_val = cfg.validate_each_epoch || matches!(cfg.model_selection, ModelSelection::BestValidation { .. });
    let val = if need_val {
        prepare_split(data, Split::Val, &scaler)?
    } else {
        Vec::new()
    };

    let provider = cfg.encoder.provider();
    let mut model = ContrastiveModel::init(&cfg.encoder, &mut rng_for(cfg.seed, &[STREAM_INIT]))?;
    let mut grad = model.zeros_like();
    let mut adam = Adam::new(cfg.optimizer.clone());
    let allowed = cfg.allowed_categories();
    let mut plan_rng = rng_for(cfg.seed, &[STREAM_PLAN]);
    let mut target_rng = rng_for(cfg.seed, &[STREAM_TARGET]);
    let mut dropout_rng = rng_for(cfg.seed, &[STREAM_DROPOUT]);

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ContrastiveModel)> = None;
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        let plan = plan_epoch(&train, cfg.sampling.batch_stays, cfg.sampling.notes_per_stay, &allowed, &mut plan_rng)?;
        let mut loss_sum = 0.0;
        for (b, refs) in plan.iter().enumerate() {
            let batch = materialize_batch(&train, refs, cfg.sampling.window, &cfg.sampling.target, &mut target_rng)?;
            let provider_out = provider.embed_batch(&batch.note_texts);
            let fwd = model.forward_pairs(batch.windows.view(), provider_out.view(), Some(&mut dropout_rng))?;
            let out = contrastive_loss(
                cfg.loss_variant,
                fwd.h_s.view(),
                fwd.h_t.view(),
                &batch.indices,
                &cfg.loss,
                &model.temperature,
            )?;
            if !out.value.is_finite() {
                return Err(HarnessError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    indices: batch.indices,
                });
            }
            grad.fill_zero();
            model.backward_pairs(&fwd, out.d_h_s.view(), out.d_h_t.view(), &mut grad);
            grad.temperature.log_inv = out.d_log_inv;
            let grads: Vec<&[f64]> = grad.param_views().into_iter().map(|p| p.data).collect();
            adam.step(model.param_slices_mut(), grads);
            loss_sum += out.value;
            debug!("epoch {epoch} batch {b}: loss {:.5}", out.value);
        }
        let val_auprc = if need_val {
            validation_auprc(&model, &provider, &val, &selection_tasks, cfg)?
        } else {
            BTreeMap::new()
        };
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / plan.len() as f64,
            batches: plan.len(),
            temperature: model.temperature.value(),
            val_auprc,
        };
        info!(
            "epoch {epoch}: loss {:.5}, nu {:.4}, val auprc {:?}",
            log.train_loss, log.temperature, log.val_auprc
        );
        let score = aggregate(&log.val_auprc, &selection_tasks);
        epochs.push(log);
        if let ModelSelection::BestValidation { patience, .. } = &cfg.model_selection {
            let score = score.unwrap_or(f64::NEG_INFINITY);
            if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                best = Some((score, epoch, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if patience.is_some_and(|p| since_best >= p) {
                    info!("stopping early after epoch {epoch}");
                    break;
                }
            }
        }
    }
    let (model, selected_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (model, epochs.len()),
    };
    Ok(Pretrained {
        model,
        scaler,
        epochs,
        selected_epoch,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}
