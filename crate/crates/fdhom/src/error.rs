//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by basis construction, fitting, testing and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("point {point} outside basis domain [{a}, {b}]")]
    DomainError { point: f64, a: f64, b: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("registration coverage: curve '{curve}' spans [{lo}, {hi}] after rescaling but the grid requires {point}")]
    RegistrationCoverage {
        curve: String,
        lo: f64,
        hi: f64,
        point: f64,
    },

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("smoothing selection failed: {0}")]
    SelectionError(String),

    #[error("matrix not positive definite: {0}")]
    Conditioning(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("component index out of range: requested {requested}, retained {retained}")]
    ComponentRange { requested: usize, retained: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("spatial median did not converge after {iterations} iterations (last step {step:.3e})")]
    MedianConvergence {
        iterations: usize,
        step: f64,
        last: Vec<f64>,
    },

    #[error("malformed input at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad inputs or configuration, as opposed to
    /// numerical failures discovered while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidBasis(_)
                | Error::DomainError { .. }
                | Error::InvalidArgument(_)
                | Error::RegistrationCoverage { .. }
                | Error::InvalidDesign(_)
                | Error::ComponentRange { .. }
                | Error::InsufficientData(_)
                | Error::Parse { .. }
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}
