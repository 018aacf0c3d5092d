//! Embedding + stacked LSTM sequence models written from scratch: forward
//! pass, exact backpropagation through time, Adam, gradient checking and a
//! binary checkpoint format.

mod backbone;
mod cell;
pub mod checkpoint;
pub mod extended;
mod gradcheck;
mod model;
mod optim;
mod tensor;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use backbone::{Backbone, BackboneTrace};
pub use cell::{cell_forward, LayerTrace, LstmLayer};
pub use gradcheck::{finite_difference, grad_check, reference_difference, GradCheck, ReferenceLoss};
pub(crate) use model::validate_tokens;
pub use model::{transfer_embedding, SequenceModel, PROB_FLOOR};
pub use optim::{clip_global_norm, OptimizerState};
pub use tensor::{log_softmax, sigmoid, softmax, softplus, Matrix, ParamRef, Parameters};
pub use train::{batch_gradient, fit, mean_loss, train_step, EpochStats, Trainable};

/// Which side of the likelihood ratio a sequence model serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    /// Normal-period model (numerator).
    N,
    /// Attack-period mixture model (denominator).
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub m_vocab: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip_norm: f64,
}

impl ModelConfig {
    /// Normal-period model settings (embedding 512, 300 units, lr 0.005,
    /// batch 512, 30 epochs).
    pub fn normal_default() -> Self {
        ModelConfig {
            m_vocab: 4096,
            embed_dim: 512,
            hidden_dim: 300,
            layers: 2,
            learning_rate: 0.005,
            batch_size: 512,
            epochs: 30,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            clip_norm: 5.0,
        }
    }

    /// Mixture model settings: as [`normal_default`](Self::normal_default)
    /// with lr 0.003, batch 128 and 10 epochs.
    pub fn mixture_default() -> Self {
        ModelConfig {
            learning_rate: 0.003,
            batch_size: 128,
            epochs: 10,
            ..Self::normal_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_vocab < 2 {
            return Err(Error::Config("m_vocab must be at least 2".into()));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.layers == 0 {
            return Err(Error::Config("embed_dim, hidden_dim and layers must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::Config("clip_norm must be >= 0".into()));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::normal_default()
    }
}
