//! Small MLP engine with exact reverse-mode gradients, the Gaussian policy,
//! the vector critic and advantage estimation.

mod adam;
mod advantage;
mod checkpoint;
mod mlp;
mod policy;
mod replay;

pub use adam::Adam;
pub use advantage::{extended_advantage, gae, gae_per_objective, TransitionBatch, Vec2};
pub use checkpoint::Checkpoint;
pub use mlp::{ForwardCache, Mlp, MlpSpec};
pub use policy::{
    compose_std, log_prob, log_prob_grad, sigmoid, softplus, GaussianPolicy, PolicyCache, PolicyOutput, VectorCritic,
    STD_FLOOR,
};
pub use replay::ReplayBuffer;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
