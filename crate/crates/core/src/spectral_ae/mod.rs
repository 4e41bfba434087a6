//! The spectral auto-encoder: encoder `E`, decoder `D`, and the coupling
//! networks `π` (spectrum → latent) and `ρ` (latent → spectrum), trained
//! jointly on shapes and their precomputed Laplacian spectra.

mod bundle;
mod loss;
mod train;

pub use bundle::{InputKind, ModelBundle, Normalization, Template};
pub use loss::{LossOptions, LossParts, Networks};
pub use train::{train, EpochLog, TrainConfig, TrainingSet, TrainReport};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::neural::NeuralError;

/// Latent width used by every model in this crate.
pub const LATENT_DIM: usize = 30;
pub const DEFAULT_K: usize = 30;
pub const DEFAULT_ALPHA: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("spectrum has {got} eigenvalues, the model expects k = {expected}")]
    KMismatch { expected: usize, got: usize },
    #[error("{context}: expected {expected} values, got {got}")]
    DimMismatch {
        context: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty training set")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, step {step}; returning the last good model")]
    NonFinite {
        epoch: usize,
        step: usize,
        last_good: Box<ModelBundle>,
    },
    #[error("training diverged at epoch {epoch}: smoothed loss {smoothed:.4e} exceeds {factor}x the best {best:.4e}")]
    Diverged {
        epoch: usize,
        smoothed: f64,
        best: f64,
        factor: f64,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
