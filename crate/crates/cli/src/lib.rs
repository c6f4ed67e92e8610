//! Library half of the command line: each subcommand is an ordinary
//! function over a parsed [`config::RunConfig`], so integration tests can
//! drive the full surface in-process.

pub mod commands;
pub mod config;
pub mod lock;
pub mod metrics;

use cliptts::error::Error;

/// Exit-code contract: 0 success, 2 input/config error, 3 numerical
/// failure, 4 usage error.
#[derive(Debug)]
pub struct CmdError {
    pub code: u8,
    pub message: String,
}

impl CmdError {
    pub fn input(message: impl Into<String>) -> Self {
        CmdError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CmdError {
            code: 3,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CmdError {
            code: 4,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<Error> for CmdError {
    fn from(e: Error) -> Self {
        match &e {
            Error::NonFiniteGradient(_) | Error::NonFinite(_) => CmdError::numeric(e.to_string()),
            Error::EmptyText => CmdError::usage(e.to_string()),
            Error::Stage { source, .. }
                if matches!(**source, Error::EmptyText) =>
            {
                CmdError::usage(e.to_string())
            }
            _ => CmdError::input(e.to_string()),
        }
    }
}

pub type CmdResult<T = ()> = Result<T, CmdError>;
