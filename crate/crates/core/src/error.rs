//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by any stage of the prediction/explanation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// The log violates its own schema (missing mandatory column, mixed
    /// value kinds for one attribute, ...).
    #[error("schema error: {0}")]
    Schema(String),

    /// A single input row could not be parsed.
    #[error("row error at line {line}: {message}")]
    Row { line: u64, message: String },

    /// Invalid configuration (bad fractions, empty grid, missing columns
    /// required by a flag, ...).
    #[error("config error: {0}")]
    Config(String),

    /// A trace could not be labeled for the requested KPI.
    #[error("labeling error: {0}")]
    Labeling(String),

    /// An API contract was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A score could not be computed (e.g. empty dataset).
    #[error("scoring error: {0}")]
    Scoring(String),

    /// A case id was not found in the log.
    #[error("case not found: {0}")]
    CaseNotFound(String),

    /// Failure tagged with the pipeline stage it occurred in.
    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("xml error: {0}")]
    Xml(String),
}

impl Error {
    /// Tag an error with the pipeline stage it occurred in.
    pub fn stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
