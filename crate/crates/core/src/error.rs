use thiserror::Error;

pub type Result<T> = std::result::Result<T, AcdError>;

#[derive(Debug, Error)]
pub enum AcdError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-positive conditional mean {value} at observation {index}")]
    Positivity { index: usize, value: f64 },

    #[error("non-finite likelihood contribution at observation {index}")]
    NonFinite { index: usize },

    #[error("model is not weakly stationary: {0}")]
    NonStationary(String),

    #[error("infinite unconditional variance: {0}")]
    InfiniteVariance(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("bin {bin} [{start:.0}s, {end:.0}s) contains no durations; use wider bins")]
    EmptyBin { bin: usize, start: f64, end: f64 },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("singular Hessian; consider reducing the model order")]
    SingularHessian,

    #[error("optimizer did not converge: {0}")]
    Convergence(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
