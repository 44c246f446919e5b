use thiserror::Error;

/// Errors produced by the fusion library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    /// The two means are too close for the range linearization to hold.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A variance denominator collapsed to zero.
    #[error("degenerate information: {0}")]
    DegenerateInformation(String),

    /// The rational-cost decomposition does not exist (noise-free measurement).
    #[error("degenerate decomposition: {0}")]
    DegenerateDecomposition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("parse error: {0}")]
    Parse(String),

    /// A guarantee-by-construction failed its re-verification; numerics bug.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable CLI exit code: 2 for input/validation problems, 1 for
    /// computational failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::InvalidScenario(_) | Error::InvalidParameter(_) | Error::Io(_) => 2,
            _ => 1,
        }
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::NotPsd(_) => "not_psd",
            Error::DegenerateGeometry(_) => "degenerate_geometry",
            Error::DegenerateInformation(_) => "degenerate_information",
            Error::DegenerateDecomposition(_) => "degenerate_decomposition",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::InvalidScenario(_) => "invalid_scenario",
            Error::Parse(_) => "parse",
            Error::Internal(_) => "internal",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
