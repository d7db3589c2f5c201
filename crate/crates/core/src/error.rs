use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum RhinoError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph contains a directed cycle through nodes {nodes:?}")]
    Cycle { nodes: Vec<usize> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("non-finite log-density at series {series}, t {t}, node {node}")]
    NonFiniteDensity { series: usize, t: usize, node: usize },

    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("unsupported model file version {found} (this build reads up to {supported})")]
    Version { found: u32, supported: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl RhinoError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        RhinoError::InvalidArgument(msg.into())
    }

    /// True for errors that stem from numerical breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            RhinoError::Numeric(_) | RhinoError::NonFiniteDensity { .. } | RhinoError::Diverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, RhinoError>;
