use std::fmt;

use thiserror::Error;

/// Side of the cutoff an observation falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Below,
    Above,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Below => write!(f, "below"),
            Side::Above => write!(f, "above"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RdError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("bandwidth {h} too small: local fit at x = {point} is not well-posed ({reason})")]
    BandwidthTooSmall {
        point: f64,
        h: f64,
        index: Option<usize>,
        reason: String,
    },

    #[error("insufficient data {}: {detail}", side.map(|s| format!("{s} the cutoff")).unwrap_or_else(|| "in window".into()))]
    Sparse { side: Option<Side>, detail: String },

    #[error("degenerate treatment contrast: G'G = {gram:e} is below tolerance {tol:e}")]
    DegenerateContrast { gram: f64, tol: f64 },

    #[error("leverage-degenerate: observation {index} carries leverage {leverage}")]
    LeverageDegenerate { index: usize, leverage: f64 },

    #[error("rank-deficient design: {0}")]
    Rank(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("deleting observation {index} leaves an infeasible fit: {source}")]
    DeletionInfeasible { index: usize, source: Box<RdError> },

    #[error("dataset unusable: {0}")]
    Unusable(String),

    #[error("no replication produced finite results for every method")]
    EmptyResult,

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<RdError>,
    },
}

impl RdError {
    pub fn at(self, stage: &'static str) -> RdError {
        RdError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error with stage wrappers stripped.
    pub fn root(&self) -> &RdError {
        match self {
            RdError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Outermost stage name, if any.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            RdError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self.root() {
            RdError::Domain(_) => "domain",
            RdError::InvalidData(_) => "invalid_data",
            RdError::DegenerateInput(_) => "degenerate_input",
            RdError::BandwidthTooSmall { .. } => "bandwidth_too_small",
            RdError::Sparse { .. } => "sparse_data",
            RdError::DegenerateContrast { .. } => "degenerate_contrast",
            RdError::LeverageDegenerate { .. } => "leverage_degenerate",
            RdError::Rank(_) => "rank_deficient",
            RdError::Numerical(_) => "numerical",
            RdError::DeletionInfeasible { .. } => "deletion_infeasible",
            RdError::Unusable(_) => "dataset_unusable",
            RdError::EmptyResult => "empty_result",
            RdError::Stage { .. } => unreachable!(),
        }
    }
}

pub type Result<T, E = RdError> = std::result::Result<T, E>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
