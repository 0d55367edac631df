//! Recurrent time-series encoder, frozen text provider with a trainable MLP
//! head, linear projections into the shared space, and normalisation.

mod model;
mod text;

pub use model::{ContrastiveModel, EmbeddingPair, PairForward};
pub use text::{tokenize, HashingEmbedder, TextEmbedder};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate embedding: projected vector {row} has norm {norm:e}")]
    DegenerateEmbedding { row: usize, norm: f64 },
    #[error("invalid encoder config: {0}")]
    Config(String),
}

/// Projected vectors shorter than this cannot be normalised.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Number of vital-sign variables `d_v`.
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub depth: usize,
    pub dropout: f64,
    /// Output width of the frozen text provider.
    pub provider_dim: usize,
    pub mlp_hidden_dim: usize,
    /// Defaults to `provider_dim` when absent.
    pub mlp_output_dim: Option<usize>,
    /// Shared embedding dimension `c`.
    pub shared_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 17,
            hidden_dim: 64,
            depth: 2,
            dropout: 0.1,
            provider_dim: 64,
            mlp_hidden_dim: 4096,
            mlp_output_dim: None,
            shared_dim: 128,
        }
    }
}

impl EncoderConfig {
    pub fn full_scale() -> Self {
        Self {
            hidden_dim: 256,
            provider_dim: 128,
            ..Self::default()
        }
    }

    pub fn mlp_output(&self) -> usize {
        self.mlp_output_dim.unwrap_or(self.provider_dim)
    }

    pub fn text_repr_dim(&self) -> usize {
        self.mlp_output() + self.provider_dim
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let dims = [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("depth", self.depth),
            ("provider_dim", self.provider_dim),
            ("mlp_hidden_dim", self.mlp_hidden_dim),
            ("mlp_output_dim", self.mlp_output()),
            ("shared_dim", self.shared_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v < 1) {
            return Err(EncoderError::Config(format!("{name} must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(EncoderError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn provider(&self) -> HashingEmbedder {
        HashingEmbedder::new(self.provider_dim)
    }
}
