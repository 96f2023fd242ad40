//! Slice-level age regression: a small configurable CNN with exact gradients,
//! trained on MAE under patient-level cross-validation.

mod io;
mod layers;
mod network;
mod train;

pub use io::{
    config_digest, decode_fold_model, encode_fold_model, load_fold_model, read_trace_csv, save_fold_model,
    write_trace_csv,
};
pub use layers::Shape;
pub use network::{LayerSpec, ModelConfig, Network, Weights};
pub use train::{
    augment, loss_mae, predict_patient_age, train_cv, train_fold, EpochStats, FoldModel, FoldReport, RotationMode,
    TrainConfig,
};

use crate::imaging::SliceSample;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegressorError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("patient `{0}` appears in both training and validation slices")]
    PatientLeakage(String),
    #[error("loss became non-finite in epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("no slices")]
    NoSlices,
    #[error("no fold models")]
    NoModels,
    #[error("no slices for patient `{0}`")]
    UnknownPatient(String),
    #[error("bad weights file: {0}")]
    BadWeightsFile(String),
    #[error("weights file was written for a different model config")]
    ConfigMismatch,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl RegressorError {
    pub fn name(&self) -> &'static str {
        match self {
            RegressorError::ShapeMismatch { .. } => "ShapeMismatch",
            RegressorError::InvalidConfig(_) => "InvalidConfig",
            RegressorError::EmptyBatch => "EmptyBatch",
            RegressorError::PatientLeakage(_) => "PatientLeakage",
            RegressorError::DivergedLoss { .. } => "DivergedLoss",
            RegressorError::NoSlices => "NoSlices",
            RegressorError::NoModels => "NoModels",
            RegressorError::UnknownPatient(_) => "UnknownPatient",
            RegressorError::BadWeightsFile(_) => "BadWeightsFile",
            RegressorError::ConfigMismatch => "ConfigMismatch",
            RegressorError::Csv(_) => "Csv",
            RegressorError::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, RegressorError>;

/// Network output for one slice, with no target rescaling.
pub fn forward(cfg: &ModelConfig, w: &Weights, s: &SliceSample) -> Result<f64> {
    Network::new(cfg)?.forward(w, &s.pixels)
}

/// Exact gradient of the batch MAE against the slices' `target_age`, over trainable parameters.
pub fn backward(cfg: &ModelConfig, w: &Weights, batch: &[SliceSample]) -> Result<Vec<f64>> {
    let net = Network::new(cfg)?;
    let inputs: Vec<&[f64]> = batch.iter().map(|s| s.pixels.as_slice()).collect();
    let targets: Vec<f64> = batch.iter().map(|s| s.target_age).collect();
    Ok(net.mae_gradient(w, &inputs, &targets)?.1)
}
