//! Deterministic numeric core: dense linear algebra, MLPs with analytic
//! backpropagation, Adam, Polyak updates, and a seedable forkable RNG.

mod adam;
mod linalg;
mod mlp;
mod rng;

pub use adam::{adam_step, soft_update, AdamState};
pub use linalg::{Matrix, Vector};
pub use mlp::{Activation, Layer, MlpGrads, MlpParams};
pub use rng::{content_hash, Rng};

#[derive(Debug, thiserror::Error)]
pub enum NumError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimMismatch { what: String, expected: usize, got: usize },
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    #[error("deserialization failed: {0}")]
    Deserialize(String),
}
