use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::CorpusError;

/// The ten note categories found in the clinical note table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "Discharge summary")]
    DischargeSummary,
    #[serde(rename = "ECG")]
    Ecg,
    #[serde(rename = "Echo")]
    Echo,
    #[serde(rename = "General")]
    General,
    #[serde(rename = "Nursing")]
    Nursing,
    #[serde(rename = "Nursing/other")]
    NursingOther,
    #[serde(rename = "Nutrition")]
    Nutrition,
    #[serde(rename = "Physician")]
    Physician,
    #[serde(rename = "Radiology")]
    Radiology,
    #[serde(rename = "Respiratory")]
    Respiratory,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::DischargeSummary,
        Category::Ecg,
        Category::Echo,
        Category::General,
        Category::Nursing,
        Category::NursingOther,
        Category::Nutrition,
        Category::Physician,
        Category::Radiology,
        Category::Respiratory,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::DischargeSummary => "Discharge summary",
            Category::Ecg => "ECG",
            Category::Echo => "Echo",
            Category::General => "General",
            Category::Nursing => "Nursing",
            Category::NursingOther => "Nursing/other",
            Category::Nutrition => "Nutrition",
            Category::Physician => "Physician",
            Category::Radiology => "Radiology",
            Category::Respiratory => "Respiratory",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| CorpusError::Validation(format!("unknown note category {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StayId(pub String);

impl fmt::Display for StayId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StayId {
    fn from(s: &str) -> Self {
        StayId(s.to_string())
    }
}

/// Hourly vital-sign matrix (`T x d_v`) with its observation mask.
///
/// Missing raw entries hold `0.0` and a `false` mask bit; only the mask
/// carries meaning for them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalsSeries {
    values: Array2<f64>,
    present: Array2<bool>,
}

impl VitalsSeries {
    pub fn new(values: Array2<f64>, present: Array2<bool>) -> Result<Self, CorpusError> {
        if values.shape() != present.shape() {
            return Err(CorpusError::Validation(format!(
                "vitals shape {:?} does not match mask shape {:?}",
                values.shape(),
                present.shape()
            )));
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(CorpusError::Validation("vitals must have at least one row and one variable".into()));
        }
        Ok(Self { values, present })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn present(&self) -> &Array2<bool> {
        &self.present
    }

    /// Number of hourly rows.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalNote {
    pub stay_id: StayId,
    pub note_index: usize,
    /// Hours since ICU admission.
    pub chart_time: f64,
    pub category: Category,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientStay {
    pub stay_id: StayId,
    pub vitals: VitalsSeries,
    pub notes: Vec<ClinicalNote>,
    pub died_in_hospital: bool,
    pub death_time: Option<f64>,
    pub stay_length: usize,
}

impl PatientStay {
    /// Builds a stay, sorting notes by chart time (stable, so ties keep
    /// their given order) and assigning consecutive note indices.
    pub fn new(
        stay_id: StayId,
        vitals: VitalsSeries,
        mut notes: Vec<ClinicalNote>,
        died_in_hospital: bool,
        death_time: Option<f64>,
        stay_length: usize,
    ) -> Result<Self, CorpusError> {
        notes.sort_by(|a, b| a.chart_time.total_cmp(&b.chart_time));
        for (j, note) in notes.iter_mut().enumerate() {
            note.note_index = j;
            note.stay_id = stay_id.clone();
        }
        let stay = Self {
            stay_id,
            vitals,
            notes,
            died_in_hospital,
            death_time,
            stay_length,
        };
        stay.validate()?;
        Ok(stay)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let id = &self.stay_id;
        if self.died_in_hospital != self.death_time.is_some() {
            return Err(CorpusError::Validation(format!(
                "stay {id}: death_time must be present iff died_in_hospital"
            )));
        }
        if let Some(t) = self.death_time {
            if !t.is_finite() || t < 0.0 || t > self.stay_length as f64 {
                return Err(CorpusError::Validation(format!(
                    "stay {id}: death_time {t} outside [0, {}]",
                    self.stay_length
                )));
            }
        }
        if self.vitals.len() != self.stay_length {
            return Err(CorpusError::Ingest {
                stay: id.to_string(),
                reason: format!(
                    "vitals have {} hourly rows but stay_length is {}",
                    self.vitals.len(),
                    self.stay_length
                ),
            });
        }
        for (j, note) in self.notes.iter().enumerate() {
            if note.note_index != j {
                return Err(CorpusError::Validation(format!("stay {id}: note indices not consecutive")));
            }
            if !note.chart_time.is_finite() || note.chart_time < 0.0 || note.chart_time > self.stay_length as f64 {
                return Err(CorpusError::Validation(format!(
                    "stay {id}: note {j} chart_time {} outside [0, {}]",
                    note.chart_time, self.stay_length
                )));
            }
            if j > 0 && self.notes[j - 1].chart_time > note.chart_time {
                return Err(CorpusError::Validation(format!("stay {id}: notes not sorted by chart_time")));
            }
        }
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        self.vitals.n_vars()
    }
}
