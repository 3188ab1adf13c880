use thiserror::Error;

/// Everything the solvers can refuse to do.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular matrix in {context}")]
    Singular { context: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unknown mode label `{0}`")]
    UnknownMode(String),

    #[error("Bogoliubov residual {residual:.3e} exceeds {limit:.1e}")]
    Bogoliubov { residual: f64, limit: f64 },

    #[error("singular value decomposition failed to converge")]
    Svd,

    #[error("eigendecomposition failed to converge")]
    Eigen,

    #[error("zero-norm amplitude in {0}")]
    ZeroNorm(String),

    #[error("no transmission dip inside the grid")]
    NoDip,

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn singular(context: impl Into<String>) -> Self {
        Error::Singular {
            context: context.into(),
        }
    }
}
