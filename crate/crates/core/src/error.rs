use thiserror::Error;

/// Errors raised by sequence design, estimation and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// `S^H S` is not invertible, so least-squares estimation is undefined.
    #[error(
        "singular model: S is {rows}x{cols} (N+K = {rows}, (K+1)Nt = {cols}); {reason}"
    )]
    SingularModel {
        rows: usize,
        cols: usize,
        reason: String,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::NumericFailure(msg.into())
    }

    /// True for failures caused by the numbers rather than by the inputs' shape or syntax.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NumericFailure(_) | Error::SingularModel { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
