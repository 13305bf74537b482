use serde::Serialize;
use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset failed validation ({} violation(s)); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Validation(Vec<Violation>),

    #[error("data error at row {row:?}, column `{column}`: {message}")]
    Data {
        row: Option<usize>,
        column: String,
        message: String,
    },

    #[error("positivity violation: {0}")]
    Positivity(String),

    #[error("empty fitting stratum: {0}")]
    EmptyStratum(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("all observation weights are zero")]
    ZeroWeights,

    #[error("fluctuation for component {component} did not converge (score {score:e})")]
    FluctuationNonConvergence { component: usize, score: f64 },

    #[error("identifiability failure: psi1 - psi3 = {denominator} is not positive")]
    IdentifiabilityFailure { denominator: f64 },

    #[error("{what} must be positive, got {value}")]
    NonPositive { what: String, value: f64 },

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("invalid bandwidth {0}: must be positive and finite")]
    InvalidBandwidth(f64),

    #[error("degenerate biomarker: {0}")]
    DegenerateBiomarker(String),

    #[error("missing nuisance component: {0}")]
    MissingNuisance(String),

    #[error("no phase-two observations in arm {0}")]
    NoPhaseTwo(u8),

    #[error("every learner failed: {0}")]
    AllLearnersFailed(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed distribution table: {0}")]
    MalformedTable(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Data { .. } => "data",
            Error::Positivity(_) => "positivity",
            Error::EmptyStratum(_) => "empty_stratum",
            Error::RankDeficient(_) => "rank_deficient",
            Error::ZeroWeights => "zero_weights",
            Error::FluctuationNonConvergence { .. } => "fluctuation_non_convergence",
            Error::IdentifiabilityFailure { .. } => "identifiability_failure",
            Error::NonPositive { .. } => "non_positive",
            Error::UnsupportedMode(_) => "unsupported_mode",
            Error::InvalidBandwidth(_) => "invalid_bandwidth",
            Error::DegenerateBiomarker(_) => "degenerate_biomarker",
            Error::MissingNuisance(_) => "missing_nuisance",
            Error::NoPhaseTwo(_) => "no_phase_two",
            Error::AllLearnersFailed(_) => "all_learners_failed",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::MalformedTable(_) => "malformed_table",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// Structured payload suitable for a machine-readable error stream.
    pub fn payload(&self) -> ErrorPayload {
        let violations = match self {
            Error::Validation(v) => v.clone(),
            _ => Vec::new(),
        };
        ErrorPayload {
            error: self.kind(),
            message: self.to_string(),
            violations,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorPayload {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}
