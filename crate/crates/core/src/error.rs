use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown label `{label}` for attribute `{attribute}`")]
    UnknownLabel { attribute: String, label: String },

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("arity mismatch: expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("invalid constraint: {0}")]
    Constraint(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("line {line}: {message}")]
    Line { line: u64, message: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("problem size {size} exceeds the cap of {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("marginal mismatch: {0}")]
    MarginalMismatch(String),

    #[error("no cleaner row for tuple {0}")]
    Coverage(String),

    #[error("ROD undefined: {0}")]
    UndefinedRod(String),

    #[error("misuse: {0}")]
    Misuse(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
