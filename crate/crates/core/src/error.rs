use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank deficiency at input {index}: residual norm {residual:e} below pivot tolerance")]
    RankDeficient { index: usize, residual: f64 },

    #[error("matrix is zero")]
    ZeroMatrix,

    #[error("spectrum is scalar; recentered eigenvalues vanish")]
    ScalarSpectrum,

    #[error("trace must vanish, found {0:e}")]
    NonzeroTrace(f64),

    #[error("input is not traceless (trace {0:e})")]
    NotTraceless(f64),

    #[error("{what} = {value} exceeds cap {cap}")]
    CapExceeded {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
