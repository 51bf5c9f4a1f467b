use thiserror::Error;

use crate::hap::{AgentId, Time};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("alphabet violation: {0}")]
    Alphabet(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid adversary choice at round {round}: {reason}")]
    Choice { round: Time, reason: String },

    #[error("budget exceeded: {explored} runs explored (limit {limit}, upper estimate {estimate})")]
    Budget {
        limit: usize,
        explored: usize,
        estimate: u128,
    },

    #[error("horizon error: {0}")]
    Horizon(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("time {time} is beyond the horizon {horizon}")]
    Range { time: Time, horizon: Time },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse_at(column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line: 1,
            column,
            message: message.into(),
        }
    }
}
