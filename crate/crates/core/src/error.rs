use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model evaluation failed at {point:?}: {what}")]
    ModelEvaluation { point: Vec<f64>, what: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("quadrature did not reach tolerance {tol:e} (achieved estimate {estimate:e})")]
    Quadrature { tol: f64, estimate: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("no singularity bounds x = {x} on the {side} side")]
    UnboundedInterval { x: f64, side: &'static str },

    #[error("degenerate singularity at {point:?}: {what}")]
    DegenerateSingularity { point: Vec<f64>, what: String },

    #[error("point {point:?} lies on the singular set")]
    OnSingularSet { point: Vec<f64> },

    #[error("sigma is singular at {point:?}")]
    DegenerateSigma { point: Vec<f64> },

    #[error("numerical blow-up at step {step}")]
    NumericalBlowup { step: usize },

    #[error("unknown stop rule label `{0}`")]
    UnknownLabel(String),

    #[error("trajectory was stored with stride {0}; the full path is required")]
    NeedsFullPath(usize),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used in JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ModelEvaluation { .. } => "model_evaluation",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Quadrature { .. } => "quadrature",
            Error::Asymmetric(_) => "asymmetric",
            Error::NotPsd(_) => "not_psd",
            Error::UnboundedInterval { .. } => "unbounded_interval",
            Error::DegenerateSingularity { .. } => "degenerate_singularity",
            Error::OnSingularSet { .. } => "on_singular_set",
            Error::DegenerateSigma { .. } => "degenerate_sigma",
            Error::NumericalBlowup { .. } => "numerical_blowup",
            Error::UnknownLabel(_) => "unknown_label",
            Error::NeedsFullPath(_) => "needs_full_path",
            Error::Precondition(_) => "precondition",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Scenario(_) => "scenario",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
