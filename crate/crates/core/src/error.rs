use thiserror::Error;

/// Errors produced by the model, the solvers and the file readers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error in `{block}`: {message}")]
    Schema { block: String, message: String },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate output: the SIM output matrix is zero")]
    DegenerateOutput,

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
}

impl SimError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        SimError::Argument(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        SimError::Parse {
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn schema(block: impl Into<String>, msg: impl Into<String>) -> Self {
        SimError::Schema {
            block: block.into(),
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
