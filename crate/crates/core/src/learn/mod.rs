//! Parameter learning: preprocessing into compressed per-timestep sketches,
//! the compressed and uncompressed losses with analytic gradients,
//! mini-batch SGD and rollout evaluation.

mod cds_file;
mod eval;
mod loss;
mod preprocess;
mod train;

use num_complex::Complex64;
use thiserror::Error;

use crate::field::GridSpec;
use crate::io::FormatError;
use crate::model::{ModelError, ModelKind};
use crate::sim::SimError;
use crate::sketch::{ProjectionSpec, SketchError};
use crate::spectral::{BetaRule, FrequencyMask, SpectralError};

pub use cds_file::{load_cds, read_cds_header, save_cds, CdsHeader, CDS_MAGIC, CDS_VERSION};
pub use eval::{evaluate_rollout_mse, RolloutReport};
pub use loss::{grad_reel, loss_and_grad, loss_baseline, loss_reel, per_step_losses};
pub use preprocess::{decompose_step, preprocess, raw_dataset, DecomposedChannel, PreprocessConfig, Sketching};
pub use train::{initial_theta, select_learning_rate, train, ThetaInit, TrainConfig, TrainResult, LR_GRID};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("invalid setting: {0}")]
    Config(String),
    #[error("dataset does not match the model: {0}")]
    Mismatch(String),
    #[error("loss became non-finite in epoch {epoch} at learning rate {lr:e}; try a smaller learning rate")]
    NonFinite { epoch: usize, lr: f64 },
}

/// How a channel's data was routed into the two domains.
pub use crate::model::DomainRouting;

/// Compressed data of one field at one timestep. Feature vectors are stored
/// feature-major: feature `i` occupies `[i * n, (i + 1) * n)`. An empty
/// domain (no data routed there) has zero-length vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSketch {
    /// Frequency mask used at this step, for split channels.
    pub mask: Option<FrequencyMask>,
    pub val_target: Vec<f64>,
    pub val_features: Vec<f64>,
    pub freq_target: Vec<Complex64>,
    pub freq_features: Vec<Complex64>,
}

impl ChannelSketch {
    pub fn val_len(&self) -> usize {
        self.val_target.len()
    }

    pub fn freq_len(&self) -> usize {
        self.freq_target.len()
    }
}

/// All channels of one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSketch {
    pub channels: Vec<ChannelSketch>,
}

/// Per-channel metadata of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInfo {
    pub field: String,
    pub n_features: usize,
    pub routing: DomainRouting,
}

/// Training data that no longer references the raw trajectory: per-timestep
/// targets `P du^GT` and projected features `P W_i`, in a value domain and a
/// frequency domain.
///
/// The uncompressed baseline uses the same container with identity
/// projections and everything in the value domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedDataset {
    pub model: ModelKind,
    pub config_text: String,
    pub grid: GridSpec,
    pub channels: Vec<ChannelInfo>,
    pub param_names: Vec<String>,
    pub theta_true: Vec<f64>,
    /// Threshold rule, `None` when no spectral split was done.
    pub beta: Option<BetaRule>,
    pub ratio: f64,
    pub val_spec: ProjectionSpec,
    pub freq_spec: ProjectionSpec,
    /// Default frequency-domain weight.
    pub lambda: f64,
    pub steps: Vec<StepSketch>,
}

impl CompressedDataset {
    pub fn dt(&self) -> f64 {
        self.grid.dt
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn n_features(&self) -> usize {
        self.channels.iter().map(|c| c.n_features).sum()
    }

    /// Checks the declared sketch sizes.
    pub fn validate(&self) -> Result<(), LearnError> {
        for (t, s) in self.steps.iter().enumerate() {
            if s.channels.len() != self.channels.len() {
                return Err(LearnError::Mismatch(format!("step {t} has {} channels", s.channels.len())));
            }
            for (c, (info, ch)) in self.channels.iter().zip(&s.channels).enumerate() {
                let ok_val = ch.val_target.is_empty() || ch.val_target.len() == self.val_spec.n;
                let ok_freq = ch.freq_target.is_empty() || ch.freq_target.len() == self.freq_spec.n;
                let ok_feat = ch.val_features.len() == info.n_features * ch.val_target.len()
                    && ch.freq_features.len() == info.n_features * ch.freq_target.len();
                if !(ok_val && ok_freq && ok_feat) {
                    return Err(LearnError::Mismatch(format!(
                        "step {t} channel {c}: sketch sizes do not match the declared dimensions"
                    )));
                }
            }
        }
        Ok(())
    }
}
