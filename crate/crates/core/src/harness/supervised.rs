use ndarray::{Array2, ArrayView3};
use rand::seq::SliceRandom;
use rand::RngCore;
use log::debug;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::corpus::PatientStay;
use crate::encoders::EncoderConfig;
use crate::evaluation::{auprc, instance_windows, TaskInstance};
use crate::nn::{join, sigmoid, Adam, AdamConfig, GruEncoder, Linear, ParamView, Parameters};
use crate::rng::rng_for;

const STREAM_INIT: u64 = 11;
const STREAM_SHUFFLE: u64 = 12;
const STREAM_DROPOUT: u64 = 13;

/// Every label fraction gets the same step budget; the parameters with the
/// best validation AuPRC are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupervisedConfig {
    pub max_steps: usize,
    pub batch_size: usize,
    /// Steps between validation checks.
    pub eval_every: usize,
    /// Validation checks without improvement before stopping.
    pub patience: usize,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        Self {
            max_steps: 1000,
            batch_size: 64,
            eval_every: 100,
            patience: 4,
        }
    }
}

impl SupervisedConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.max_steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(HarnessError::Config("supervised max_steps, batch_size and eval_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of [`train_supervised`].
#[derive(Debug, Clone)]
pub struct SupervisedRun {
    pub model: SupervisedModel,
    pub steps: usize,
    /// Step whose parameters were kept.
    pub best_step: usize,
    pub best_val_auprc: f64,
}

/// Recurrent encoder plus a linear logit head, trained from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedModel {
    pub series: GruEncoder,
    pub head: Linear,
}

impl SupervisedModel {
    pub fn init(cfg: &EncoderConfig, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[STREAM_INIT]);
        let series = GruEncoder::init(cfg.input_dim, cfg.hidden_dim, cfg.depth, cfg.dropout, &mut rng);
        let head = Linear::init(cfg.hidden_dim, 1, true, &mut rng);
        Self { series, head }
    }

    fn zeros_like(&self) -> Self {
        Self {
            series: self.series.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    /// Event probabilities for a batch of windows.
    pub fn predict(&self, x: ArrayView3<f64>) -> Vec<f64> {
        let h = self.series.encode(x);
        self.head.forward(h.view()).column(0).iter().map(|&z| sigmoid(z)).collect()
    }

    /// Mean BCE-with-logits over the batch; accumulates gradients into `grad`.
    fn step_loss(&self, x: ArrayView3<f64>, y: &[bool], dropout: &mut dyn RngCore, grad: &mut Self) -> f64 {
        let (h, cache) = self.series.forward(x, Some(dropout));
        let z = self.head.forward(h.view());
        let b = y.len() as f64;
        let mut loss = 0.0;
        let mut dz = Array2::zeros((y.len(), 1));
        for (i, (&zi, &yi)) in z.column(0).iter().zip(y).enumerate() {
            let t = if yi { 1.0 } else { 0.0 };
            // softplus(z) - t z, written to stay finite for large |z|
            loss += zi.max(0.0) - t * zi + (-zi.abs()).exp().ln_1p();
            dz[[i, 0]] = (sigmoid(zi) - t) / b;
        }
        let dh = self.head.backward(h.view(), dz.view(), &mut grad.head);
        self.series.backward(&cache, dh.view(), &mut grad.series);
        loss / b
    }
}

impl Parameters for SupervisedModel {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>) {
        self.series.params(&join(prefix, "series"), out);
        self.head.params(&join(prefix, "head"), out);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.series.params_mut(out);
        self.head.params_mut(out);
    }
}

/// Trains a [`SupervisedModel`] on labelled instances of the preprocessed
/// train split, selecting on validation AuPRC.
pub fn train_supervised(
    train: (&[PatientStay], &[TaskInstance]),
    val: (&[PatientStay], &[TaskInstance]),
    encoder: &EncoderConfig,
    optimizer: &AdamConfig,
    cfg: &SupervisedConfig,
    seed: u64,
) -> Result<SupervisedRun, HarnessError> {
    cfg.validate()?;
    let (stays, instances) = train;
    if instances.is_empty() {
        return Err(HarnessError::Config("no labelled instances to train on".into()));
    }
    let val_labels: Vec<bool> = val.1.iter().map(|i| i.label).collect();
    let mut model = SupervisedModel::init(encoder, seed);
    let mut grad = model.zeros_like();
    let mut adam = Adam::new(optimizer.clone());
    let mut shuffle = rng_for(seed, &[STREAM_SHUFFLE]);
    let mut dropout = rng_for(seed, &[STREAM_DROPOUT]);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut cursor = order.len();
    let mut best: Option<(f64, usize, SupervisedModel)> = None;
    let mut stale = 0;
    let mut step = 0;
    while step < cfg.max_steps {
        if cursor >= order.len() {
            order.shuffle(&mut shuffle);
            cursor = 0;
        }
        let end = (cursor + cfg.batch_size).min(order.len());
        let batch: Vec<TaskInstance> = order[cursor..end].iter().map(|&i| instances[i].clone()).collect();
        cursor = end;
        let x = instance_windows(stays, &batch)?;
        let y: Vec<bool> = batch.iter().map(|i| i.label).collect();
        grad.fill_zero();
        let loss = model.step_loss(x.view(), &y, &mut dropout, &mut grad);
        if !loss.is_finite() {
            return Err(HarnessError::Config(format!("supervised baseline diverged at step {step}")));
        }
        let grads: Vec<&[f64]> = grad.param_views().into_iter().map(|p| p.data).collect();
        adam.step(model.param_slices_mut(), grads);
        step += 1;
        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            let score = auprc(&supervised_scores(&model, val.0, val.1)?, &val_labels)?;
            debug!("supervised step {step}: loss {loss:.5}, val auprc {score:.4}");
            if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                best = Some((score, step, model.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
    }
    let (best_val_auprc, best_step, model) = best.expect("at least one validation check");
    Ok(SupervisedRun {
        model,
        steps: step,
        best_step,
        best_val_auprc,
    })
}

/// Scores instances with a trained supervised model.
pub fn supervised_scores(model: &SupervisedModel, stays: &[PatientStay], instances: &[TaskInstance]) -> Result<Vec<f64>, HarnessError> {
    let mut out = Vec::with_capacity(instances.len());
    for chunk in instances.chunks(2048) {
        let x = instance_windows(stays, chunk)?;
        out.extend(model.predict(x.view()));
    }
    Ok(out)
}
