//! Crate-wide error type.
//!
//! Variants are grouped by subsystem so callers (notably the CLI) can map
//! failures to exit codes and the agent loop can route candidate diagnostics
//! back into refinement prompts.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The CSV header or column layout does not match the documented schema.
    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    /// The file parsed, but a row violates a data invariant.
    #[error("data integrity error in {path} at row {row}: {message}")]
    DataIntegrity {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("unknown model variant {family}/{variant}; available: {available}")]
    UnknownVariant {
        family: String,
        variant: String,
        available: String,
    },

    #[error("parameter error: {0}")]
    Params(String),

    #[error("candidate parse error at line {line}, column {column}: {message}")]
    CandidateParse {
        line: usize,
        column: usize,
        message: String,
    },

    /// Candidate failed static validation or probe evaluation; the payload is
    /// the human-readable diagnostic list fed back to refinement prompts.
    #[error("candidate validation failed:\n{0}")]
    CandidateInvalid(String),

    #[error("candidate runtime error at row {row}: {message}")]
    CandidateRuntime { row: usize, message: String },

    #[error("simulation produced a non-finite acceleration in event {event} at step {step}")]
    NonFiniteAccel { event: String, step: usize },

    /// An argument is outside the mathematical domain of an operation
    /// (e.g. a non-positive baseline loss for an improvement rate).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("prompt template '{template}' has unbound placeholder {{{placeholder}}}")]
    UnboundPlaceholder { template: String, placeholder: String },

    #[error("chat transport error: {0}")]
    Transport(String),

    #[error("chat endpoint returned HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },

    #[error("chat response violates the expected wire shape: {0}")]
    Protocol(String),

    #[error("replay transcript exhausted after {consumed} responses")]
    ReplayExhausted { consumed: usize },

    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<Error> },

    /// Candidate generation failed all debug attempts for one iteration.
    #[error("candidate generation failed after {attempts} attempts:\n{diagnostics}")]
    CodegenFailed { attempts: u32, diagnostics: String },

    /// A trial event stream is malformed (wrong order, missing events).
    #[error("trial log error: {0}")]
    TrialLog(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether a chat failure is worth retrying: transport faults, rate
    /// limiting, and server-side errors. Malformed payloads and client-side
    /// mistakes are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            Error::Transport(_) => true,
            Error::HttpStatus { status, .. } => *status == 429 || (500..600).contains(status),
            _ => false,
        }
    }
}
