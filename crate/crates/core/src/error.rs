use thiserror::Error;

/// Errors raised by kernel propagation, sampling, likelihood evaluation and IO.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("argument outside the function domain: {0}")]
    Domain(String),

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("kernel is not in the image of the forward step: {0}")]
    NotInImage(String),

    #[error("hyperparameters on the phase boundary: {0}")]
    PhaseBoundary(String),

    #[error("mapping is not invertible: {0}")]
    NotInvertible(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    /// The optimizer produced a non-finite likelihood. `trace` holds the
    /// forward-pass MLL values recorded up to and including the failure.
    #[error("optimization diverged at iteration {iteration}")]
    OptimizationDiverged { iteration: usize, trace: Vec<f64> },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical pipeline (as opposed to bad
    /// arguments or IO).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateKernel(_)
                | Error::NotInImage(_)
                | Error::PhaseBoundary(_)
                | Error::NotInvertible(_)
                | Error::UndefinedCorrelation(_)
                | Error::OptimizationDiverged { .. }
                | Error::Domain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
