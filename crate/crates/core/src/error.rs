use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid dimensions, layer indices, windows or hyperparameters.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("injection error at layer {layer}: expected {expected:?}, got {actual:?}")]
    Injection {
        layer: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure at step {step}: {what}")]
    Numerical { step: usize, what: String },

    /// A value outside the domain of a formula (e.g. psnr below psnr_min).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("no edit: {0}")]
    NoEdit(String),

    #[error("missing data: {0}")]
    Missing(String),

    #[error("scene specification error: {0}")]
    Scene(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Stable short class name, used by the CLI for machine-parsable errors.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Injection { .. } => "injection",
            Error::Shape(_) => "shape",
            Error::Numerical { .. } => "numerical",
            Error::Domain(_) => "domain",
            Error::DegenerateRegion(_) => "degenerate-region",
            Error::UndefinedCorrelation(_) => "undefined-correlation",
            Error::NoEdit(_) => "no-edit",
            Error::Missing(_) => "missing",
            Error::Scene(_) => "scene",
        }
    }
}
