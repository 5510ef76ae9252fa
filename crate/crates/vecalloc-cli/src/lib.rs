//! Implementation of the `vecalloc` command-line tool: configuration
//! documents, the rest-direction JSON document, one-shot allocation reports,
//! scenario execution, and figure reproduction. The binary in `main.rs` is a
//! thin argument-parsing layer over this crate.

pub mod config;
pub mod figures;
pub mod kbdoc;
pub mod report;

use thiserror::Error;
use vecalloc::{ClassicError, ConvexError, KbError, SimError};

/// Process exit codes: 0 = solved to optimality, 1 = configuration or I/O
/// problem, 2 = iteration limit hit, 3 = rest-direction search infeasible.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("solver stopped at the iteration limit; returned the best iterate")]
    MaxIters,
    #[error("rest-direction search infeasible: {0}")]
    InfeasibleKb(KbError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::MaxIters => 2,
            CliError::InfeasibleKb(_) => 3,
        }
    }
}

impl From<KbError> for CliError {
    fn from(e: KbError) -> Self {
        CliError::InfeasibleKb(e)
    }
}

impl From<ConvexError> for CliError {
    fn from(e: ConvexError) -> Self {
        CliError::Config(format!("convex solver rejected the problem: {e}"))
    }
}

impl From<ClassicError> for CliError {
    fn from(e: ClassicError) -> Self {
        CliError::Config(format!("classic solver rejected the problem: {e}"))
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(format!("scenario: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o error: {e}"))
    }
}
