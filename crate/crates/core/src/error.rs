use thiserror::Error;

/// Errors raised by the collocation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration error at line {line}: {msg}")]
    ConfigLine { line: usize, msg: String },

    #[error("non-finite Gram entry between functionals {first} and {second}")]
    NonFiniteGram { first: usize, second: usize },

    #[error(
        "ill-conditioned system: factorization failed at pivot {pivot} \
         (reduced diagonal {value:e}, jitter {jitter:e})"
    )]
    IllConditioned { pivot: usize, value: f64, jitter: f64 },

    #[error("training data already satisfied (max residual {max_residual:e}); no functional selected")]
    AlreadySatisfied { max_residual: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training with {parameter} = {value} failed: {source}")]
    SearchFailed {
        parameter: String,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error in {context}: {msg}")]
    Parse { context: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got })
        }
    }

    /// True for errors caused by user-supplied configuration.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::ConfigLine { .. } | Error::InvalidArgument(_) | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
