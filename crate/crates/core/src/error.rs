use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unsupported activation `{0}`")]
    UnsupportedActivation(String),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("model produced a non-finite output ({0})")]
    NonFiniteOutput(f64),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("enumeration guard: {0}")]
    EnumerationGuard(String),

    #[error("coalition {0} is not present in the table")]
    MissingCoalition(String),

    #[error("invalid interaction allocation: {0}")]
    InvalidAllocation(String),

    #[error("weight family list is empty")]
    EmptyFamilyList,

    #[error("surrogate fit is singular: {0}")]
    SingularFit(String),

    #[error("invalid Dirichlet concentration: {0}")]
    InvalidAlpha(String),

    #[error("operation requires a polynomial model")]
    NotPolynomial,

    #[error("postulate checks require a single-row background, got {0} rows")]
    BackgroundNotSingleRow(usize),

    #[error("labels contain a single class")]
    DegenerateLabels,

    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
