use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::EvaluationError;
use crate::nn::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// L2 penalty on the weights (not the bias).
    pub l2: f64,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            tolerance: 1e-6,
            max_iterations: 10_000,
        }
    }
}

/// Logistic-regression head on frozen encoder features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub iterations: usize,
}

impl ProbeModel {
    pub fn logit(&self, x: ArrayView1<f64>) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    pub fn predict(&self, features: ArrayView2<f64>) -> Vec<f64> {
        features.outer_iter().map(|x| sigmoid(self.logit(x))).collect()
    }
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss plus `l2/2 * |w|^2`, with the bias as last coordinate.
fn objective(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>, l2: f64) -> f64 {
    let z = x * theta;
    let n = y.len() as f64;
    let data: f64 = z.iter().zip(y.iter()).map(|(&z, &y)| log1p_exp(z) - y * z).sum::<f64>() / n;
    let d = theta.len() - 1;
    data + 0.5 * l2 * theta.rows(0, d).norm_squared()
}

/// Fits the probe by damped Newton iterations on the penalised mean
/// logistic loss. Deterministic for given inputs.
pub fn fit_linear_probe(features: ArrayView2<f64>, labels: &[bool], cfg: &ProbeConfig) -> Result<ProbeModel, EvaluationError> {
    let (n, d) = features.dim();
    if n != labels.len() {
        return Err(EvaluationError::Validation(format!("{n} feature rows but {} labels", labels.len())));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n < 2 || n_pos == 0 || n_pos == n {
        return Err(EvaluationError::SingleClass);
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(EvaluationError::Validation("probe features must be finite".into()));
    }
    let x = DMatrix::from_fn(n, d + 1, |i, j| if j < d { features[[i, j]] } else { 1.0 });
    let y = DVector::from_iterator(n, labels.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    let mut penalty = DVector::from_element(d + 1, cfg.l2);
    penalty[d] = 0.0;
    let nf = n as f64;

    let mut theta = DVector::zeros(d + 1);
    let mut loss = objective(&x, &y, &theta, cfg.l2);
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        let p = (&x * &theta).map(sigmoid);
        let grad = x.tr_mul(&(&p - &y)) / nf + penalty.component_mul(&theta);
        if grad.norm() < cfg.tolerance {
            break;
        }
        let w = p.map(|v| v * (1.0 - v));
        let xw = DMatrix::from_fn(n, d + 1, |i, j| x[(i, j)] * w[i]);
        let mut hess = x.tr_mul(&xw) / nf;
        for j in 0..=d {
            // the tiny ridge keeps the bias row positive definite when
            // every prediction saturates
            hess[(j, j)] += penalty[j] + 1e-12;
        }
        let step = match hess.cholesky() {
            Some(c) => c.solve(&grad),
            None => grad.clone(),
        };
        let mut t = 1.0;
        loop {
            let candidate = &theta - &step * t;
            let c_loss = objective(&x, &y, &candidate, cfg.l2);
            if c_loss <= loss - 1e-4 * t * grad.dot(&step) || t < 1e-10 {
                theta = candidate;
                loss = c_loss;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
    }
    Ok(ProbeModel {
        weights: Array1::from_iter(theta.rows(0, d).iter().copied()),
        bias: theta[d],
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, concatenate, Axis};

    #[test]
    fn separable_pair() {
        let x = array![[-1.0, 0.5], [1.0, 0.5]];
        let probe = fit_linear_probe(x.view(), &[false, true], &ProbeConfig::default()).unwrap();
        let p = probe.predict(x.view());
        assert!(p[0] < 0.5 && p[1] > 0.5);
    }

    #[test]
    fn duplicated_data_gives_the_same_probe() {
        let x = array![[0.2, -1.0], [1.5, 0.3], [-0.7, 0.8], [0.1, 0.1], [2.0, -0.4]];
        let y = [false, true, false, true, true];
        let a = fit_linear_probe(x.view(), &y, &ProbeConfig::default()).unwrap();
        let xx = concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let yy: Vec<bool> = y.iter().chain(y.iter()).copied().collect();
        let b = fit_linear_probe(xx.view(), &yy, &ProbeConfig::default()).unwrap();
        for (u, v) in a.weights.iter().zip(b.weights.iter()) {
            assert!((u - v).abs() < 1e-9);
        }
        assert!((a.bias - b.bias).abs() < 1e-9);
    }

    #[test]
    fn single_class_is_an_error() {
        let x = array![[0.0], [1.0]];
        assert_eq!(
            fit_linear_probe(x.view(), &[true, true], &ProbeConfig::default()),
            Err(EvaluationError::SingleClass)
        );
    }
}
