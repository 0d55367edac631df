use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::{soft_neighborhood, NeighborhoodMatrix, ObjectiveError, Temperature};
use crate::sampling::BatchIndex;

/// Which index the aware-loss denominator leaves out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AwareDenominator {
    /// Sum over `n != l`.
    #[default]
    ExcludeL,
    /// Sum over `n != m`.
    ExcludeM,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    #[default]
    MmNcl,
    MmInfonce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub aware_denominator: AwareDenominator,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 2.0,
            aware_denominator: AwareDenominator::ExcludeL,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ObjectiveError::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.beta >= 1.0) || self.beta.is_infinite() {
            return Err(ObjectiveError::Config(format!("beta must be a finite value >= 1, got {}", self.beta)));
        }
        Ok(())
    }
}

/// A loss value with gradients w.r.t. both embedding matrices and the
/// log inverse temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub d_h_s: Array2<f64>,
    pub d_h_t: Array2<f64>,
    pub d_log_inv: f64,
}

impl LossOutput {
    fn mix(a: LossOutput, wa: f64, b: LossOutput, wb: f64) -> LossOutput {
        LossOutput {
            value: wa * a.value + wb * b.value,
            d_h_s: a.d_h_s * wa + b.d_h_s * wb,
            d_h_t: a.d_h_t * wa + b.d_h_t * wb,
            d_log_inv: wa * a.d_log_inv + wb * b.d_log_inv,
        }
    }
}

fn check_inputs(h_s: ArrayView2<f64>, h_t: ArrayView2<f64>, min_k: usize) -> Result<usize, ObjectiveError> {
    if h_s.dim() != h_t.dim() {
        return Err(ObjectiveError::Shape(format!(
            "series embeddings {:?} and text embeddings {:?} differ",
            h_s.dim(),
            h_t.dim()
        )));
    }
    let k = h_s.nrows();
    if k < min_k {
        return Err(ObjectiveError::BatchTooSmall { k, min: min_k });
    }
    Ok(k)
}

fn check_neighborhood(nb: &NeighborhoodMatrix, k: usize) -> Result<(), ObjectiveError> {
    if nb.raw.dim() != (k, k) {
        return Err(ObjectiveError::Shape(format!("neighborhood is {:?} for a batch of {k}", nb.raw.dim())));
    }
    Ok(())
}

/// Evaluates a loss defined on the logits `A = S / nu` and chains its
/// logit gradient back to the embeddings and the temperature.
fn through_logits<F>(h_s: ArrayView2<f64>, h_t: ArrayView2<f64>, temp: &Temperature, f: F) -> LossOutput
where
    F: Fn(&Array2<f64>) -> (f64, Array2<f64>),
{
    let s = h_s.dot(&h_t.t());
    let inv = temp.inverse();
    let a = &s * inv;
    let (value, d_a) = f(&a);
    let d_inv = Zip::from(&d_a).and(&s).fold(0.0, |acc, &g, &x| acc + g * x);
    let d_s = d_a * inv;
    LossOutput {
        value,
        d_h_s: d_s.dot(&h_t),
        d_h_t: d_s.t().dot(&h_s),
        d_log_inv: d_inv * temp.inverse_derivative(),
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Masked log-sum-exp of a row, split as `(max, ln(sum exp(x - max)))`, and
/// the matching softmax weights. Callers subtract the two parts one at a
/// time so that losses near zero keep their relative precision.
fn masked_lse(row: &[f64], keep: impl Fn(usize) -> bool) -> ((f64, f64), Vec<f64>) {
    let mut arg = usize::MAX;
    let mut max = f64::NEG_INFINITY;
    for (n, &v) in row.iter().enumerate() {
        if keep(n) && (arg == usize::MAX || v > max) {
            arg = n;
            max = v;
        }
    }
    let mut p: Vec<f64> = row
        .iter()
        .enumerate()
        .map(|(n, &v)| if keep(n) { (v - max).exp() } else { 0.0 })
        .collect();
    let rest: f64 = p.iter().enumerate().filter(|(n, _)| *n != arg).map(|(_, v)| v).sum();
    let total = 1.0 + rest;
    for v in &mut p {
        *v /= total;
    }
    ((max, rest.ln_1p()), p)
}

/// One direction of the aware loss on logits `a`:
/// `sum_l sum_m c[l][m] * (a[l][m] - LSE_{n in D(l, m)} a[l][n])`.
fn aware_direction(a: &Array2<f64>, c: &Array2<f64>, denom: AwareDenominator, d_a: &mut Array2<f64>) -> f64 {
    let k = a.nrows();
    let mut value = 0.0;
    for l in 0..k {
        let row = a.row(l).to_vec();
        match denom {
            AwareDenominator::ExcludeL => {
                let ((max, log_rest), p) = masked_lse(&row, |n| n != l);
                let mut c_sum = 0.0;
                for m in 0..k {
                    let w = c[[l, m]];
                    if w != 0.0 {
                        value += w * ((row[m] - max) - log_rest);
                        d_a[[l, m]] += w;
                        c_sum += w;
                    }
                }
                for n in 0..k {
                    d_a[[l, n]] -= c_sum * p[n];
                }
            }
            AwareDenominator::ExcludeM => {
                // prefix[m] = LSE(row[..m]), suffix[m] = LSE(row[m..])
                let mut prefix = vec![f64::NEG_INFINITY; k + 1];
                let mut suffix = vec![f64::NEG_INFINITY; k + 1];
                for m in 0..k {
                    prefix[m + 1] = log_add_exp(prefix[m], row[m]);
                }
                for m in (0..k).rev() {
                    suffix[m] = log_add_exp(suffix[m + 1], row[m]);
                }
                for m in 0..k {
                    let w = c[[l, m]];
                    if w == 0.0 {
                        continue;
                    }
                    let lse = log_add_exp(prefix[m], suffix[m + 1]);
                    value += w * (row[m] - lse);
                    d_a[[l, m]] += w;
                    for n in (0..k).filter(|&n| n != m) {
                        d_a[[l, n]] -= w * (row[n] - lse).exp();
                    }
                }
            }
        }
    }
    value
}

/// One direction of the discriminative loss on logits `a`:
/// `sum_l c * (a[l][l] - LSE_{m : mask[l][m]} a[l][m])`.
fn discriminative_direction(a: &Array2<f64>, mask: &Array2<bool>, c: f64, d_a: &mut Array2<f64>) -> f64 {
    let k = a.nrows();
    let mut value = 0.0;
    for l in 0..k {
        let row = a.row(l).to_vec();
        let ((max, log_rest), p) = masked_lse(&row, |m| mask[[l, m]]);
        value += c * ((row[l] - max) - log_rest);
        d_a[[l, l]] += c;
        for m in 0..k {
            d_a[[l, m]] -= c * p[m];
        }
    }
    value
}

fn both_directions<F>(a: &Array2<f64>, f: F) -> (f64, Array2<f64>)
where
    F: Fn(&Array2<f64>, &mut Array2<f64>) -> f64,
{
    let k = a.nrows();
    let mut d_a = Array2::zeros((k, k));
    let mut value = f(a, &mut d_a);
    let a_t = a.t().to_owned();
    let mut d_a_t = Array2::zeros((k, k));
    value += f(&a_t, &mut d_a_t);
    d_a += &d_a_t.t();
    (value, d_a)
}

/// Neighborhood aware loss. Needs `K >= 2`.
pub fn loss_aware(
    h_s: ArrayView2<f64>,
    h_t: ArrayView2<f64>,
    nb: &NeighborhoodMatrix,
    temp: &Temperature,
    denom: AwareDenominator,
) -> Result<LossOutput, ObjectiveError> {
    let k = check_inputs(h_s, h_t, 2)?;
    check_neighborhood(nb, k)?;
    let c = &nb.weights * (-1.0 / (2.0 * k as f64));
    Ok(through_logits(h_s, h_t, temp, |a| {
        both_directions(a, |x, d| aware_direction(x, &c, denom, d))
    }))
}

/// Neighborhood discriminative loss.
pub fn loss_discriminative(
    h_s: ArrayView2<f64>,
    h_t: ArrayView2<f64>,
    indicator: &Array2<bool>,
    temp: &Temperature,
) -> Result<LossOutput, ObjectiveError> {
    let k = check_inputs(h_s, h_t, 1)?;
    if indicator.dim() != (k, k) {
        return Err(ObjectiveError::Shape(format!("indicator is {:?} for a batch of {k}", indicator.dim())));
    }
    if (0..k).any(|l| !indicator[[l, l]]) {
        return Err(ObjectiveError::Config("indicator diagonal must be all true".into()));
    }
    let c = -1.0 / (2.0 * k as f64);
    Ok(through_logits(h_s, h_t, temp, |a| {
        both_directions(a, |x, d| discriminative_direction(x, indicator, c, d))
    }))
}

/// Symmetric CLIP cross-entropy. Its denominators include the positive.
pub fn loss_mm_infonce(h_s: ArrayView2<f64>, h_t: ArrayView2<f64>, temp: &Temperature) -> Result<LossOutput, ObjectiveError> {
    let k = check_inputs(h_s, h_t, 1)?;
    let everything = Array2::from_elem((k, k), true);
    loss_discriminative(h_s, h_t, &everything, temp)
}

/// `alpha * L_A + (1 - alpha) * L_D` on a prebuilt neighborhood.
pub fn loss_mm_ncl_with(
    h_s: ArrayView2<f64>,
    h_t: ArrayView2<f64>,
    nb: &NeighborhoodMatrix,
    cfg: &LossConfig,
    temp: &Temperature,
) -> Result<LossOutput, ObjectiveError> {
    cfg.validate()?;
    let aware = loss_aware(h_s, h_t, nb, temp, cfg.aware_denominator)?;
    if cfg.alpha == 1.0 {
        return Ok(aware);
    }
    let disc = loss_discriminative(h_s, h_t, &nb.indicator, temp)?;
    Ok(LossOutput::mix(aware, cfg.alpha, disc, 1.0 - cfg.alpha))
}

pub fn loss_mm_ncl(
    h_s: ArrayView2<f64>,
    h_t: ArrayView2<f64>,
    indices: &[BatchIndex],
    cfg: &LossConfig,
    temp: &Temperature,
) -> Result<LossOutput, ObjectiveError> {
    cfg.validate()?;
    let nb = soft_neighborhood(indices, cfg.beta)?;
    loss_mm_ncl_with(h_s, h_t, &nb, cfg, temp)
}

/// Dispatches on the configured training objective.
pub fn contrastive_loss(
    variant: LossVariant,
    h_s: ArrayView2<f64>,
    h_t: ArrayView2<f64>,
    indices: &[BatchIndex],
    cfg: &LossConfig,
    temp: &Temperature,
) -> Result<LossOutput, ObjectiveError> {
    match variant {
        LossVariant::MmNcl => loss_mm_ncl(h_s, h_t, indices, cfg, temp),
        LossVariant::MmInfonce => loss_mm_infonce(h_s, h_t, temp),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn unit() -> Temperature {
        Temperature::from_value(1.0)
    }

    #[test]
    fn aware_two_orthogonal_pairs() {
        let h = array![[1.0, 0.0], [0.0, 1.0]];
        let out = loss_aware(h.view(), h.view(), &NeighborhoodMatrix::identity(2), &unit(), AwareDenominator::ExcludeL).unwrap();
        assert!((out.value + 1.0).abs() < 1e-15);
    }

    #[test]
    fn aware_needs_two_samples() {
        let h = array![[1.0, 0.0]];
        let err = loss_aware(h.view(), h.view(), &NeighborhoodMatrix::identity(1), &unit(), AwareDenominator::ExcludeL).unwrap_err();
        assert_eq!(err, ObjectiveError::BatchTooSmall { k: 1, min: 2 });
    }

    #[test]
    fn discriminative_same_stay_pair() {
        let h = array![[1.0, 0.0], [0.0, 1.0]];
        let ind = Array2::from_elem((2, 2), true);
        let out = loss_discriminative(h.view(), h.view(), &ind, &unit()).unwrap();
        assert!((out.value - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn discriminative_vanishes_on_identity_indicator() {
        let h = array![[0.6, 0.8], [1.0, 0.0], [0.0, -1.0]];
        let t = array![[0.0, 1.0], [0.8, 0.6], [-0.6, 0.8]];
        let out = loss_discriminative(h.view(), t.view(), &NeighborhoodMatrix::identity(3).indicator, &Temperature::default()).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.d_h_s.iter().chain(out.d_h_t.iter()).all(|&g| g == 0.0));
    }

    #[test]
    fn infonce_single_sample_is_zero() {
        let h = array![[0.6, 0.8]];
        let t = array![[1.0, 0.0]];
        assert_eq!(loss_mm_infonce(h.view(), t.view(), &Temperature::default()).unwrap().value, 0.0);
    }

    #[test]
    fn infonce_identity_similarity() {
        let h = array![[1.0, 0.0], [0.0, 1.0]];
        let v = loss_mm_infonce(h.view(), h.view(), &unit()).unwrap().value;
        assert!((v - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn alpha_one_is_aware_only() {
        let idx: Vec<BatchIndex> = (0..3)
            .map(|j| BatchIndex {
                stay_index: 0,
                note_index: j,
                target_time: j as f64 * 2.0,
            })
            .collect();
        let h = array![[0.6, 0.8], [1.0, 0.0], [0.0, -1.0]];
        let t = array![[0.0, 1.0], [0.8, 0.6], [-0.6, 0.8]];
        let cfg = LossConfig {
            alpha: 1.0,
            ..LossConfig::default()
        };
        let nb = soft_neighborhood(&idx, cfg.beta).unwrap();
        let mix = loss_mm_ncl(h.view(), t.view(), &idx, &cfg, &unit()).unwrap();
        let aware = loss_aware(h.view(), t.view(), &nb, &unit(), cfg.aware_denominator).unwrap();
        assert_eq!(mix, aware);
    }

    #[test]
    fn invalid_alpha() {
        let cfg = LossConfig {
            alpha: 0.0,
            ..LossConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn log_add_exp_handles_empty() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 2.0), 2.0);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
