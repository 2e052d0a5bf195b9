//! The two adversarial augmenters: a convolutional GAN mapping paired,
//! duration-matched control spectrograms to a dysarthric speaker, and a
//! spectral-basis GAN perturbing SVD bases learned from non-parallel data.

mod dcgan;
mod history;
mod pipeline;
mod sbgan;
mod svd;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::AutogradError;
use crate::signal::SignalError;

pub use dcgan::{
    chunk_matrix, dcgan_train, dcgan_train_discriminator, dcgan_transform, minimax_value, DcganDiscriminator,
    DcganGenerator, DcganModel,
};
pub use history::{EpochStats, TrainHistory};
pub use pipeline::{match_length, pipeline_sbgan, pipeline_speed_gan, PipelineConfig};
pub use sbgan::{sbgan_augment, sbgan_train, SbganDiscriminator, SbganGenerator, SbganMode, SbganModel};
pub use svd::{svd_bases, SpectralBasis};

#[derive(Debug, Error)]
pub enum GanError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no training examples")]
    Empty,
    #[error("k = {k} outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("model has not been trained")]
    Untrained,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GanError>;

/// How a model's parameters came about. Augmentation pipelines refuse
/// freshly initialised models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelOrigin {
    Initialized,
    Trained,
    Constructed,
    Loaded,
}

impl ModelOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Initialized => "initialized",
            Self::Trained => "trained",
            Self::Constructed => "constructed",
            Self::Loaded => "loaded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Weight of the paired L1 term in the convolutional generator's loss.
    pub l1_weight: f64,
    /// Time width of the convolutional GAN's chunks.
    pub chunk_frames: usize,
    /// Retained spectral bases.
    pub k: usize,
    /// Scale of the basis perturbation; `None` means 0.1 times the mean
    /// basis-vector norm of the training blocks.
    pub delta_scale: Option<f64>,
    /// Hidden widths of the spectral-basis generator.
    pub hidden: [usize; 2],
    pub sbgan_mode: SbganMode,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 8,
            seed: 0,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            l1_weight: 0.0,
            chunk_frames: 128,
            k: 32,
            delta_scale: None,
            hidden: [512, 512],
            sbgan_mode: SbganMode::Block,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("chunk_frames", self.chunk_frames),
            ("k", self.k),
            ("hidden[0]", self.hidden[0]),
            ("hidden[1]", self.hidden[1]),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(GanError::Config(format!("{name} must be positive")));
        }
        if !(self.lr > 0.0) || !(self.l1_weight >= 0.0) || self.delta_scale.is_some_and(|d| !(d >= 0.0)) {
            return Err(GanError::Config("lr must be positive; l1_weight and delta_scale non-negative".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(GanError::Config("moment decays must lie in [0, 1)".into()));
        }
        Ok(())
    }
}
