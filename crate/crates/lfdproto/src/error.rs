use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e} exceeds tolerance)")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix contains NaN or infinite entries")]
    NotFinite,

    #[error("matrix is not positive-definite (Cholesky failed even after ridge)")]
    NotPositiveDefinite,

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("projected denominator matrix is singular beyond ridge rescue")]
    SingularProjection,

    #[error("class {class} has no points")]
    EmptyClass { class: usize },

    #[error("class sizes are unequal ({sizes:?}); equal per-class counts required")]
    UnequalClassSizes { sizes: Vec<usize> },

    #[error("requested {requested} projection directions, at most {available} available")]
    DimensionTooLarge { requested: usize, available: usize },

    #[error("scatter rank {rank} is below the requested {requested} directions")]
    RankDeficient { requested: usize, rank: usize },

    #[error("loss requires at least one non-target prototype")]
    EmptyOthers,

    #[error("empty task list")]
    EmptyTaskList,

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("risk bound denominator is not positive")]
    DegenerateDenominator,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("training diverged at iteration {iteration} (loss {loss})")]
    DivergenceDetected { iteration: usize, loss: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
