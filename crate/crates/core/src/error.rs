use std::path::PathBuf;

use thiserror::Error;

use crate::induced_graph::ComplianceViolation;
use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Syntax error in one of the line-oriented text formats.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    /// 1-based line number.
    pub line: usize,
    /// 1-based column (in characters).
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid batched einsum: {}", join(.0))]
    Invalid(Vec<Violation>),

    #[error("syntax error at {0}")]
    Parse(#[from] ParseError),

    #[error("cannot render in classic notation: {0}")]
    Notation(String),

    #[error("batched einsum cannot be encoded as an induced graph: {0}")]
    Unencodable(String),

    #[error("graph is not a compliant induced graph: {}", join(.0))]
    NonCompliant(Vec<ComplianceViolation>),

    #[error("naming function is not injective: {0}")]
    NameCollision(String),

    #[error("batched einsum is not in canonical form")]
    NotCanonical,

    #[error("relabeling has size {found}, graph has {expected} nodes")]
    SizeMismatch { expected: usize, found: usize },

    #[error("no binding for array `{0}`")]
    MissingBinding(String),

    #[error("binding for `{name}` does not match its declaration: {reason}")]
    BindingMismatch { name: String, reason: String },

    #[error("brute-force search needs {needed} candidates, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("infeasible generator parameters: {0}")]
    InfeasibleParams(String),

    #[error("kernel cannot be raised: {0}")]
    Raising(String),

    #[error("kernel does not match the reference einsum\n  reference: {reference}\n  kernel:    {raised}")]
    CanonicalMismatch { reference: String, raised: String },

    #[error("invalid fact record: {0}")]
    InvalidRecord(String),

    #[error("no facts for key {key} on device `{device}`")]
    NotFound { key: String, device: String },

    #[error("malformed database {path} line {line}: {message}")]
    DbFormat {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("timed out waiting for lock {0}")]
    LockTimeout(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for storage failures, as opposed to problems with the input.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::LockTimeout(_) | Error::DbFormat { .. }
        )
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
