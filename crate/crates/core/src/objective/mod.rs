//! Soft neighborhood, the aware and discriminative contrastive losses, their
//! mix, the CLIP-style baseline, and the trainable temperature.

mod losses;
mod neighborhood;
mod temperature;

pub use losses::{
    contrastive_loss, loss_aware, loss_discriminative, loss_mm_infonce, loss_mm_ncl, loss_mm_ncl_with, AwareDenominator,
    LossConfig, LossOutput, LossVariant,
};
pub use neighborhood::{soft_neighborhood, soft_weight, NeighborhoodMatrix};
pub use temperature::{temperature_value, Temperature, INITIAL_TEMPERATURE, MAX_INVERSE_TEMPERATURE};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("batch of {k} sample(s) is too small; need at least {min}")]
    BatchTooSmall { k: usize, min: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid loss config: {0}")]
    Config(String),
}
