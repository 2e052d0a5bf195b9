//! Reverse-mode automatic differentiation over dense `f64` tensors, with the
//! layers, optimisers and gradient checks the models in this crate need.
//!
//! A forward pass records onto a [`Tape`]; parameters live in a
//! [`ParamSet`] and are bound onto each new tape as leaves (trainable) or
//! constants (frozen).

mod checkpoint;
mod conv;
mod gradcheck;
mod layers;
mod optim;
mod tape;
mod tensor;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use conv::{Conv2dOptions, PaddingMode};
pub use gradcheck::{check_gradient, finite_diff_check, gradcheck_suite, OpCheck, Probes, FD_EPS, GRAD_TOLERANCE};
pub use layers::{bind, Conv2d, Linear};
pub use optim::{sgd_step, Adam};
pub use tape::{log_softmax_in_place as log_softmax_row, Gradients, Tape, Var};
pub use tensor::{ParamSet, Tensor};

#[derive(Debug, Error)]
pub enum AutogradError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward needs a one-element loss, got shape {0:?}")]
    NonScalar(Vec<usize>),
    #[error("backward already ran on this tape; record a new forward pass")]
    BackwardTwice,
    #[error("backward on an empty tape")]
    EmptyTape,
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("unknown padding mode {0:?} (expected zero or replicate)")]
    UnknownPadding(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AutogradError>;
