use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("rank-deficient matrix: row {row} vanished during orthogonalization (residual norm {residual:e})")]
    RankDeficient { row: usize, residual: f64 },

    #[error("near-singular update: smallest eigenvalue of W W* is {0:e}; reduce the step size")]
    NearSingular(f64),

    #[error("matrix is not positive semidefinite: eigenvalue {0:e}")]
    NotPositiveSemidefinite(f64),

    #[error("matrix is not Hermitian: deviation {0:e}")]
    NotHermitian(f64),

    #[error("matrix is not unitary: ||W W* - I||_F = {0:e}")]
    NotUnitary(f64),

    #[error("spectral identity check failed: {0}")]
    IdentityCheck(String),

    #[error("optimizer failed at iteration {iteration}: {source}")]
    Optimizer {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("manifest check failed: {0}")]
    Manifest(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::RankDeficient { .. } | Error::NearSingular(_) | Error::NotUnitary(_) | Error::IdentityCheck(_) => {
                true
            }
            Error::Optimizer { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
