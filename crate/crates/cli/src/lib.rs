//! Command-line front end: experiment specs, allocation CSVs, commands and
//! the bundled example corpus.
//!
//! Exit codes: 0 success, 1 usage, 2 parse, 3 structural, 4 unbalanced or
//! refused, 5 oracle deviation.

pub mod commands;
pub mod corpus;
pub mod load;
pub mod oracle;
pub mod spec;

use decomptab_core::{AlgebraError, BalanceError, ModelError, StructureError};
use thiserror::Error;

pub use commands::{run, Command, Options, Outcome, RunMode};
pub use spec::{parse_spec, parse_spec_str, ExperimentSpec, TierSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("{0}")]
    Unbalanced(String),
    #[error("oracle deviation: {0}")]
    Oracle(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Structural(_) => 3,
            CliError::Unbalanced(_) => 4,
            CliError::Oracle(_) => 5,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<StructureError> for CliError {
    fn from(e: StructureError) -> Self {
        match e {
            StructureError::Model(m) => m.into(),
            other => CliError::Structural(other.to_string()),
        }
    }
}

impl From<AlgebraError> for CliError {
    fn from(e: AlgebraError) -> Self {
        CliError::Structural(e.to_string())
    }
}

impl From<BalanceError> for CliError {
    fn from(e: BalanceError) -> Self {
        match e {
            BalanceError::Unbalanced { .. } | BalanceError::Refused(_) => {
                CliError::Unbalanced(e.to_string())
            }
            BalanceError::Structure(s) => s.into(),
            other => CliError::Structural(other.to_string()),
        }
    }
}
