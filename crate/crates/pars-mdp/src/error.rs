use thiserror::Error;

/// Errors surfaced by the library. The CLI maps each variant class to a
/// distinct exit code: validation failures → 1, solver preconditions → 2,
/// I/O and parsing → 3.
#[derive(Debug, Error)]
pub enum ParsError {
    /// A validation failure: an unclean instance report, or a document whose
    /// claims do not hold against its instance.
    #[error("validation failed: {}", .violations.join("; "))]
    Validation { violations: Vec<String> },

    /// A solver was called outside its contract (wrong layout, bad ε, ...).
    #[error("{0}")]
    Precondition(String),

    /// Policy enumeration would exceed the configured cap.
    #[error("policy count {count} exceeds enumeration cap {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl ParsError {
    /// Short machine-readable kind tag, stable for scripting.
    pub fn kind(&self) -> &'static str {
        match self {
            ParsError::Validation { .. } => "validation",
            ParsError::Precondition(_) => "precondition",
            ParsError::EnumerationCap { .. } => "precondition",
            ParsError::Io(_) => "io",
            ParsError::Parse(_) => "parse",
        }
    }

    /// CLI exit code class for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ParsError::Validation { .. } => 1,
            ParsError::Precondition(_) | ParsError::EnumerationCap { .. } => 2,
            ParsError::Io(_) | ParsError::Parse(_) => 3,
        }
    }
}

impl From<serde_json::Error> for ParsError {
    fn from(e: serde_json::Error) -> Self {
        ParsError::Parse(e.to_string())
    }
}

impl From<csv::Error> for ParsError {
    fn from(e: csv::Error) -> Self {
        ParsError::Parse(e.to_string())
    }
}
