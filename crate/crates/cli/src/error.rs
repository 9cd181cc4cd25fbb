use std::fmt;

use rfdlc::Error;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Config,
    Data,
    Numeric,
}

impl Failure {
    pub fn exit_code(self) -> i32 {
        match self {
            Failure::Config => 2,
            Failure::Data => 3,
            Failure::Numeric => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub failure: Failure,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl ToString) -> Self {
        Self {
            failure: Failure::Config,
            message: msg.to_string(),
        }
    }

    pub fn data(msg: impl ToString) -> Self {
        Self {
            failure: Failure::Data,
            message: msg.to_string(),
        }
    }

    pub fn numeric(msg: impl ToString) -> Self {
        Self {
            failure: Failure::Numeric,
            message: msg.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.failure.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let failure = match &e {
            Error::InvalidDimension(_)
            | Error::InvalidPenalty(_)
            | Error::Conflict { .. }
            | Error::Config(_)
            | Error::InfeasibleImbalance { .. } => Failure::Config,
            Error::NumericOverflow | Error::Diverged { .. } | Error::SingularWeight { .. } => Failure::Numeric,
            Error::Normalization { .. }
            | Error::Index { .. }
            | Error::InconsistentCounts(_)
            | Error::DimensionMismatch(_)
            | Error::UndefinedRate(_)
            | Error::Data(_)
            | Error::Io { .. }
            | Error::Parse(_) => Failure::Data,
        };
        Self {
            failure,
            message: e.to_string(),
        }
    }
}
