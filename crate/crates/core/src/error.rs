use thiserror::Error;

pub type Result<T> = std::result::Result<T, GmemError>;

#[derive(Debug, Error)]
pub enum GmemError {
    /// Operand shapes are incompatible for the requested operation.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// Caller supplied an invalid input (token id out of range, empty sequence, ...).
    #[error("input error: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    /// A documented precondition of an API was violated.
    #[error("contract error: {0}")]
    Contract(String),

    /// The finite-difference oracle could not produce a trustworthy answer.
    #[error("oracle error: {0}")]
    Oracle(String),

    /// Training produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl GmemError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        GmemError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            GmemError::Io(_) => 3,
            GmemError::Numerical(_) => 4,
            _ => 2,
        }
    }
}
