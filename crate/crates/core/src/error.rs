use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("graph is disconnected")]
    Disconnected,

    #[error("invalid edge probabilities: {0}")]
    InvalidProbs(String),

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("matrix-tree minor for root {0} is singular")]
    SingularMinor(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dual objective increased by {increase:e} at update {update}")]
    Monotonicity { update: usize, increase: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("line search failed after {0} halvings")]
    LineSearch(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
