use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvaluationError;
use crate::corpus::{PatientStay, StayId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Mortality,
    Decompensation,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Mortality, Task::Decompensation];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Mortality => "mortality",
            Task::Decompensation => "decompensation",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = EvaluationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| EvaluationError::Validation(format!("unknown task {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelConfig {
    /// Observation period of the mortality task.
    pub mortality_hours: usize,
    /// First hour at which a decompensation prediction is made.
    pub first_eval_hour: usize,
    /// Decompensation look-ahead in hours.
    pub horizon: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            mortality_hours: 48,
            first_eval_hour: 4,
            horizon: 24.0,
        }
    }
}

/// One labelled prediction point: the encoder sees hours
/// `end_hour - length .. end_hour - 1` of stay `stay_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub stay_index: usize,
    pub stay_id: StayId,
    pub end_hour: usize,
    pub length: usize,
    pub label: bool,
}

/// Outcome from the first `mortality_hours`. Stays shorter than that, or
/// ending in death before it, are outside the cohort.
pub fn label_mortality(stay_index: usize, stay: &PatientStay, cfg: &LabelConfig) -> Option<TaskInstance> {
    let hours = cfg.mortality_hours;
    if stay.stay_length < hours || stay.death_time.is_some_and(|d| d < hours as f64) {
        return None;
    }
    Some(TaskInstance {
        stay_index,
        stay_id: stay.stay_id.clone(),
        end_hour: hours,
        length: hours,
        label: stay.died_in_hospital,
    })
}

/// Hourly instances from `first_eval_hour` while the patient is in the unit
/// and alive; positive when death falls within `horizon` hours.
pub fn label_decompensation(stay_index: usize, stay: &PatientStay, window: usize, cfg: &LabelConfig) -> Vec<TaskInstance> {
    let end = stay.death_time.map_or(stay.stay_length as f64, |d| d.min(stay.stay_length as f64));
    (cfg.first_eval_hour..)
        .take_while(|&t| (t as f64) < end)
        .map(|t| TaskInstance {
            stay_index,
            stay_id: stay.stay_id.clone(),
            end_hour: t,
            length: window,
            label: stay.death_time.is_some_and(|d| d - t as f64 <= cfg.horizon),
        })
        .collect()
}

/// All instances of `task` over a split.
pub fn label_split(task: Task, stays: &[PatientStay], window: usize, cfg: &LabelConfig) -> Vec<TaskInstance> {
    match task {
        Task::Mortality => stays.iter().enumerate().filter_map(|(i, s)| label_mortality(i, s, cfg)).collect(),
        Task::Decompensation => stays
            .iter()
            .enumerate()
            .flat_map(|(i, s)| label_decompensation(i, s, window, cfg))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::VitalsSeries;
    use ndarray::Array2;

    fn stay(length: usize, death: Option<f64>) -> PatientStay {
        let vitals = VitalsSeries::new(Array2::zeros((length, 2)), Array2::from_elem((length, 2), true)).unwrap();
        PatientStay::new(StayId::from("s"), vitals, vec![], death.is_some(), death, length).unwrap()
    }

    #[test]
    fn mortality_cohort() {
        let cfg = LabelConfig::default();
        assert!(label_mortality(0, &stay(100, Some(90.0)), &cfg).unwrap().label);
        assert!(label_mortality(0, &stay(30, None), &cfg).is_none());
        assert!(!label_mortality(0, &stay(100, None), &cfg).unwrap().label);
        assert!(label_mortality(0, &stay(60, Some(40.0)), &cfg).is_none());
    }

    #[test]
    fn decompensation_horizon() {
        let cfg = LabelConfig::default();
        let inst = label_decompensation(0, &stay(31, Some(30.0)), 16, &cfg);
        assert_eq!(inst.first().unwrap().end_hour, 4);
        assert_eq!(inst.last().unwrap().end_hour, 29);
        for i in &inst {
            assert_eq!(i.label, i.end_hour >= 6, "hour {}", i.end_hour);
        }
        assert_eq!(inst.iter().filter(|i| i.label).count(), 24);
    }

    #[test]
    fn survivor_is_all_negative() {
        let inst = label_decompensation(0, &stay(48, None), 16, &LabelConfig::default());
        assert_eq!(inst.len(), 44);
        assert_eq!(inst.last().unwrap().end_hour, 47);
        assert!(inst.iter().all(|i| !i.label && i.length == 16));
    }

    #[test]
    fn early_death_has_no_instances() {
        assert!(label_decompensation(0, &stay(4, Some(3.0)), 16, &LabelConfig::default()).is_empty());
    }
}
