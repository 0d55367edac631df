//! Multi-modal neighborhood contrastive pretraining for paired vital-sign
//! series and clinical notes, with zero-shot and linear-probe evaluation.

pub mod corpus;
pub mod encoders;
pub mod nn;
pub mod objective;
pub mod rng;
pub mod sampling;
pub mod evaluation;
pub mod harness;
