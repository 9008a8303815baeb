use std::path::PathBuf;

use thiserror::Error;

use crate::wigner::Triplet;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative angular momentum ({0}, {1}, {2})")]
    NegativeAngularMomentum(i64, i64, i64),

    #[error("triplet {0} violates the triangular condition")]
    InadmissibleTriplet(Triplet),

    #[error("real-basis CG block for {triplet} has imaginary residual {residual:e}")]
    NonRealResult { triplet: Triplet, residual: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("point too close to a pole (sin theta = {0:e})")]
    Pole(f64),

    #[error("expected {expected} node values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("quadrature degree {have} is below the required {need}")]
    InsufficientDegree { need: usize, have: usize },

    #[error("{path}: line {line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },

    #[error("{path}: design fails exactness at l={l}, m={m} (residual {residual:e})")]
    DesignValidation {
        path: PathBuf,
        l: usize,
        m: i64,
        residual: f64,
    },

    #[error("inconsistent coupling ratio for {triplet}: relative spread {spread:e}")]
    InconsistentRatio { triplet: Triplet, spread: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("weighted least-squares update was singular in every restart")]
    SingularUpdate,

    #[error("{0} reconstructed entries have the wrong sign or vanish")]
    RatioSign(usize),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error below any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}
