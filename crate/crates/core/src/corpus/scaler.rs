use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{PatientStay, VitalsSeries};

pub const DEFAULT_STD_FLOOR: f64 = 1e-6;

/// Per-variable standard scaler fitted on observed training entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Scaler {
    pub fn identity(n_vars: usize) -> Self {
        Self {
            mean: Array1::zeros(n_vars),
            std: Array1::ones(n_vars),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.mean.len()
    }
}

/// Mean and population standard deviation over present entries only.
/// A variable with no observations falls back to mean 0 / std 1.
pub fn fit_scaler(stays: &[PatientStay]) -> Scaler {
    fit_scaler_with_floor(stays, DEFAULT_STD_FLOOR)
}

pub fn fit_scaler_with_floor(stays: &[PatientStay], floor: f64) -> Scaler {
    let n_vars = stays.first().map(|s| s.n_vars()).unwrap_or(0);
    let mut count = vec![0usize; n_vars];
    let mut sum = vec![0.0f64; n_vars];
    for stay in stays {
        let (values, present) = (stay.vitals.values(), stay.vitals.present());
        for (((_, k), &v), &p) in values.indexed_iter().zip(present.iter()) {
            if p {
                count[k] += 1;
                sum[k] += v;
            }
        }
    }
    let mean: Vec<f64> = (0..n_vars)
        .map(|k| if count[k] > 0 { sum[k] / count[k] as f64 } else { 0.0 })
        .collect();
    let mut sq = vec![0.0f64; n_vars];
    for stay in stays {
        let (values, present) = (stay.vitals.values(), stay.vitals.present());
        for (((_, k), &v), &p) in values.indexed_iter().zip(present.iter()) {
            if p {
                sq[k] += (v - mean[k]).powi(2);
            }
        }
    }
    let mut scaler = Scaler::identity(n_vars);
    for k in 0..n_vars {
        if count[k] == 0 {
            log::warn!("variable {k} has no observed entries in the fitting split; using mean 0, std 1");
            continue;
        }
        scaler.mean[k] = mean[k];
        scaler.std[k] = (sq[k] / count[k] as f64).sqrt().max(floor);
    }
    scaler
}

/// Forward-fill, standard-scale, then zero-fill entries that have no prior
/// observation (zero is the population mean in scaled space).
pub fn preprocess(stay: &PatientStay, scaler: &Scaler) -> PatientStay {
    let raw = stay.vitals.values();
    let present = stay.vitals.present();
    let (t_len, n_vars) = raw.dim();
    let mut out = Array2::<f64>::zeros((t_len, n_vars));
    for k in 0..n_vars {
        let mut last: Option<f64> = None;
        for t in 0..t_len {
            if present[[t, k]] {
                last = Some(raw[[t, k]]);
            }
            out[[t, k]] = match last {
                Some(v) => (v - scaler.mean[k]) / scaler.std[k],
                None => 0.0,
            };
        }
    }
    let vitals = VitalsSeries::new(out, present.clone()).expect("shape preserved");
    PatientStay {
        vitals,
        ..stay.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::StayId;
    use ndarray::array;

    fn stay_with(values: Array2<f64>, present: Array2<bool>) -> PatientStay {
        let len = values.nrows();
        PatientStay::new(
            StayId::from("s"),
            VitalsSeries::new(values, present).unwrap(),
            vec![],
            false,
            None,
            len,
        )
        .unwrap()
    }

    #[test]
    fn population_std() {
        let s = stay_with(array![[1.0], [3.0]], array![[true], [true]]);
        let sc = fit_scaler(&[s]);
        assert_eq!(sc.mean[0], 2.0);
        assert_eq!(sc.std[0], 1.0);
    }

    #[test]
    fn constant_variable_is_floored() {
        let s = stay_with(array![[5.0], [5.0], [5.0]], array![[true], [true], [true]]);
        let sc = fit_scaler(&[s]);
        assert_eq!(sc.mean[0], 5.0);
        assert_eq!(sc.std[0], 1e-6);
    }

    #[test]
    fn unobserved_variable_falls_back() {
        let s = stay_with(array![[1.0, 0.0], [2.0, 0.0]], array![[true, false], [true, false]]);
        let sc = fit_scaler(&[s]);
        assert_eq!(sc.mean[1], 0.0);
        assert_eq!(sc.std[1], 1.0);
    }

    #[test]
    fn masked_entries_ignored_when_fitting() {
        let s = stay_with(array![[1.0], [100.0], [3.0]], array![[true], [false], [true]]);
        let sc = fit_scaler(&[s]);
        assert_eq!(sc.mean[0], 2.0);
    }

    #[test]
    fn forward_fill_then_scale() {
        let s = stay_with(array![[4.0], [0.0], [6.0]], array![[true], [false], [true]]);
        let sc = Scaler {
            mean: array![4.0],
            std: array![2.0],
        };
        let p = preprocess(&s, &sc);
        assert_eq!(p.vitals.values().column(0).to_vec(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn leading_missing_is_exactly_zero() {
        let s = stay_with(array![[0.0], [0.0], [9.0]], array![[false], [false], [true]]);
        let sc = Scaler {
            mean: array![1.0],
            std: array![2.0],
        };
        let p = preprocess(&s, &sc);
        assert_eq!(p.vitals.values()[[0, 0]], 0.0);
        assert_eq!(p.vitals.values()[[1, 0]], 0.0);
        assert_eq!(p.vitals.values()[[2, 0]], 4.0);
    }

    #[test]
    fn fully_observed_column_is_affine() {
        let raw = array![[1.0, 7.0], [2.5, -3.0], [8.0, 0.5]];
        let s = stay_with(raw.clone(), Array2::from_elem((3, 2), true));
        let sc = Scaler {
            mean: array![2.0, 1.0],
            std: array![3.0, 0.5],
        };
        let p = preprocess(&s, &sc);
        for ((t, k), &v) in p.vitals.values().indexed_iter() {
            assert_eq!(v, (raw[[t, k]] - sc.mean[k]) / sc.std[k]);
        }
    }

    #[test]
    fn unobserved_column_is_identically_zero() {
        let s = stay_with(array![[3.0, 1.0], [3.0, 2.0]], array![[false, true], [false, true]]);
        let sc = fit_scaler(std::slice::from_ref(&s));
        let p = preprocess(&s, &sc);
        assert!(p.vitals.values().column(0).iter().all(|&v| v == 0.0));
    }
}
