use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("symmetric eigensolver did not converge for a {dim}x{dim} matrix")]
    EigenNonConvergence { dim: usize },

    #[error("value {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("covariance is singular (min eigenvalue {min_eigenvalue:e}); use the pseudo-inverse rule instead")]
    Singular { min_eigenvalue: f64 },

    #[error("class {class} has no samples")]
    EmptyClass { class: u8 },

    #[error("degenerate rule: {0}")]
    DegenerateRule(String),

    #[error("ROAD solver did not converge (lambda={lambda:e}, iterations={iterations}, last KKT violation={last_violation:e})")]
    RoadNonConvergence {
        lambda: f64,
        iterations: usize,
        last_violation: f64,
    },

    #[error("training failed on fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
