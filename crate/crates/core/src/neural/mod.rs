//! Self-contained numerical kernel for the forecaster: tensors, LSTM and
//! Bi-LSTM layers, dense layers, the two-pathway model, exact reverse-mode
//! gradients and Adam. Everything runs in double precision.

use thiserror::Error;

pub mod adam;
pub mod dense;
pub mod lstm;
pub mod model;
pub mod tensor;
pub mod trainer;

pub use adam::{model_step, optimizer_step, AdamConfig, AdamState};
pub use dense::{dense_forward, Activation, DenseParams};
pub use lstm::{bilstm_layer_forward, lstm_cell, lstm_layer_forward, BiLstmParams, LstmCellParams};
pub use model::{batch_loss, loss_and_gradients, mse_loss, ModelConfig, TrainingSample, TwoPathwayModel};
pub use tensor::Tensor;
pub use trainer::{fit, FitReport, TrainConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("training diverged at epoch {epoch}: {message}")]
    Divergence { epoch: usize, message: String },
}

pub type Result<T, E = NeuralError> = std::result::Result<T, E>;
