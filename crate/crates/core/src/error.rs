use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operator is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no records: decoherence defect {defect:e} exceeds tolerance {tolerance:e}")]
    NoRecords { defect: f64, tolerance: f64 },

    #[error("null branch: Tr(C rho C^dag) = {weight:e}")]
    NullBranch { weight: f64 },

    #[error("resonant horizon: |sin(omega tau)| = {sin:e} is below the resonance guard")]
    ResonantHorizon { sin: f64 },

    #[error("quadrature did not converge: estimated error {residual:e} after {evaluations} evaluations")]
    QuadratureNonConvergence { residual: f64, evaluations: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error for `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn validation(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            message: msg.into(),
        }
    }

    /// Process exit status used by the scenario runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation { .. } => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }

    /// Stable machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::NotHermitian { .. } => "not_hermitian",
            Error::InvalidInput(_) => "invalid_input",
            Error::NoRecords { .. } => "no_records",
            Error::NullBranch { .. } => "null_branch",
            Error::ResonantHorizon { .. } => "resonant_horizon",
            Error::QuadratureNonConvergence { .. } => "quadrature_non_convergence",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Io { .. } => "io",
        }
    }
}
