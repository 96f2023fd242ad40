//! Epidemiological evaluation: logistic models with Wald odds ratios,
//! two-sample tests, ROC analysis and bootstrap inference.

mod bootstrap;
pub mod descriptive;
mod hypothesis;
mod logistic;
mod roc;

pub use bootstrap::{bootstrap_auc, compare_auc, BootstrapAuc, BootstrapOptions, ResampleMode};
pub use descriptive::{mean, percentile, sample_sd};
pub use hypothesis::{
    chi_square_test, mann_whitney_u, permutation_test, student_t_sf, welch_t_test, MwuMode,
    PermutationStatistic,
};
pub use logistic::{
    build_design, build_design_columns, fit_logistic, odds_ratio, predicted_risk, Covariate, CovariateSource,
    DesignMatrix, FitOptions, LogisticFit, ModelId, OddsRatio,
};
pub use roc::{auc_probabilistic, auc_trapezoid, confusion_at_fpr, roc_curve, ConfusionMatrix, RocCurve, RocPoint};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("outcome has a single class; both cases and controls are required")]
    OneClassOutcome,
    #[error("quasi-separation: coefficient of `{covariate}` diverges")]
    QuasiSeparation { covariate: String },
    #[error("information matrix is singular")]
    Singular,
    #[error("fit did not converge")]
    NotConverged,
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("patient {patient} is missing covariate `{covariate}`")]
    MissingCovariate { patient: String, covariate: String },
    #[error("design columns {got:?} do not match fitted columns {expected:?}")]
    ColumnMismatch { expected: Vec<String>, got: Vec<String> },
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl StatsError {
    pub fn name(&self) -> &'static str {
        match self {
            StatsError::OneClassOutcome => "OneClassOutcome",
            StatsError::QuasiSeparation { .. } => "QuasiSeparation",
            StatsError::Singular => "Singular",
            StatsError::NotConverged => "NotConverged",
            StatsError::TooFewSamples { .. } => "TooFewSamples",
            StatsError::EmptyInput => "EmptyInput",
            StatsError::LengthMismatch(..) => "LengthMismatch",
            StatsError::MissingCovariate { .. } => "MissingCovariate",
            StatsError::ColumnMismatch { .. } => "ColumnMismatch",
            StatsError::UnknownCovariate(_) => "UnknownCovariate",
            StatsError::InvalidArgument(_) => "InvalidArgument",
        }
    }
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// Outcome of a hypothesis test. Serialises as `{method, statistic, df, p_value}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: String,
    pub statistic: f64,
    pub df: Option<f64>,
    pub p_value: f64,
}

impl TestResult {
    pub(crate) fn new(method: &str, statistic: f64, df: Option<f64>, p_value: f64) -> Self {
        Self { method: method.to_string(), statistic, df, p_value: p_value.clamp(0.0, 1.0) }
    }
}

pub(crate) fn check_two_classes(labels: &[bool]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(StatsError::OneClassOutcome);
    }
    Ok((pos, neg))
}
