use std::path::Path;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{EvaluationError, Task};
use crate::encoders::{ContrastiveModel, TextEmbedder};

/// Positive and negative class prompts for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptEnsemble {
    pub task: Task,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

const MORTALITY_PROMPTS: &str = include_str!("../../prompts/mortality.toml");
const DECOMPENSATION_PROMPTS: &str = include_str!("../../prompts/decompensation.toml");

impl PromptEnsemble {
    pub fn validate(&self) -> Result<(), EvaluationError> {
        if self.positive.is_empty() || self.negative.is_empty() {
            return Err(EvaluationError::Validation(format!(
                "prompt ensemble for {} needs positive and negative prompts",
                self.task
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, EvaluationError> {
        let e: PromptEnsemble = toml::from_str(text).map_err(|e| EvaluationError::Validation(format!("prompt file: {e}")))?;
        e.validate()?;
        Ok(e)
    }

    pub fn load(path: &Path) -> Result<Self, EvaluationError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvaluationError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The ensembles shipped with the crate.
    pub fn default_for(task: Task) -> Self {
        let text = match task {
            Task::Mortality => MORTALITY_PROMPTS,
            Task::Decompensation => DECOMPENSATION_PROMPTS,
        };
        Self::from_toml(text).expect("bundled prompt files are valid")
    }

    pub fn swapped(&self) -> Self {
        Self {
            task: self.task,
            positive: self.negative.clone(),
            negative: self.positive.clone(),
        }
    }
}

/// Class prototypes: means of the normalised prompt embeddings. The means
/// are deliberately left unnormalised.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptPrototypes {
    pub positive: Array1<f64>,
    pub negative: Array1<f64>,
}

pub fn prompt_prototypes(
    model: &ContrastiveModel,
    provider: &dyn TextEmbedder,
    ensemble: &PromptEnsemble,
) -> Result<PromptPrototypes, EvaluationError> {
    ensemble.validate()?;
    let mean = |prompts: &[String]| -> Result<Array1<f64>, EvaluationError> {
        let h = model.embed_texts(prompts, provider)?;
        Ok(h.mean_axis(Axis(0)).expect("non-empty"))
    };
    Ok(PromptPrototypes {
        positive: mean(&ensemble.positive)?,
        negative: mean(&ensemble.negative)?,
    })
}

/// First entry of a two-way softmax of `(a, b)` at the given temperature,
/// written so that swapping the arguments gives exactly `1 - p`.
pub fn binary_softmax(a: f64, b: f64, temperature: f64) -> f64 {
    let d = (a - b) / temperature;
    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    if d >= 0.0 {
        sigmoid(d)
    } else {
        1.0 - sigmoid(-d)
    }
}

pub fn zero_shot_probability(h_s: ArrayView1<f64>, protos: &PromptPrototypes, temperature: f64) -> f64 {
    binary_softmax(h_s.dot(&protos.positive), h_s.dot(&protos.negative), temperature)
}

/// Scores every row of `h_s` (unit-norm series embeddings).
pub fn zero_shot_scores(h_s: ArrayView2<f64>, protos: &PromptPrototypes, temperature: f64) -> Vec<f64> {
    h_s.outer_iter()
        .map(|h| zero_shot_probability(h, protos, temperature))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn bundled_prompts_parse() {
        let m = PromptEnsemble::default_for(Task::Mortality);
        assert_eq!(m.positive.len(), 8);
        assert!(m.positive.contains(&"condition: expired".to_string()));
        assert_eq!(m.negative, vec!["survived", "stable", "discharged"]);
        let d = PromptEnsemble::default_for(Task::Decompensation);
        assert_eq!(d.positive, vec!["Discharge Condition: Expired", "Expired", "died", "dnr"]);
        assert_eq!(d.negative, vec!["stable", "stable condition", "discharged today"]);
    }

    #[test]
    fn empty_ensemble_is_rejected() {
        let e = PromptEnsemble {
            task: Task::Mortality,
            positive: vec![],
            negative: vec!["stable".into()],
        };
        assert!(e.validate().is_err());
        assert!(PromptEnsemble::from_toml("task = \"mortality\"\npositive = []\nnegative = [\"x\"]").is_err());
    }

    #[test]
    fn equal_prototypes_give_one_half() {
        let p = PromptPrototypes {
            positive: array![0.3, -0.2],
            negative: array![0.3, -0.2],
        };
        assert_eq!(zero_shot_probability(array![0.6, 0.8].view(), &p, 1.0), 0.5);
    }

    #[test]
    fn plus_minus_one() {
        let e = std::f64::consts::E;
        let p = binary_softmax(1.0, -1.0, 1.0);
        assert!((p - e / (e + 1.0 / e)).abs() < 1e-15);
        assert!((p - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn swap_is_exact_complement() {
        for (a, b) in [(0.3, -0.7), (-2.0, 5.0), (1e-9, 0.0), (0.1, 0.1)] {
            assert_eq!(binary_softmax(b, a, 1.0), 1.0 - binary_softmax(a, b, 1.0));
        }
    }
}
