use alloc::string::String;

use crate::calendar::CalendarDate;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the modelling core.
///
/// The variants are grouped by the exit category the command line maps them
/// to: configuration problems, data problems and model failures.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid date {0}")]
    InvalidDate(String),
    #[error("unknown {kind} label {label:?}; valid labels: {valid}")]
    UnknownLabel { kind: &'static str, label: String, valid: String },
    #[error("date range {from}..={to} outside series range {start}..={end}")]
    OutOfRange { from: CalendarDate, to: CalendarDate, start: CalendarDate, end: CalendarDate },
    #[error("data error: {0}")]
    Data(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("optimizer did not converge after {restarts} restarts (best log-likelihood {best_loglik}, gradient norm {grad_norm})")]
    NoConvergence { restarts: usize, best_loglik: f64, grad_norm: f64 },
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("model error: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn insufficient(msg: impl Into<String>) -> Self {
        Error::Insufficient(msg.into())
    }

    pub(crate) fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }

    /// Coarse category used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::InvalidDate(_) | Error::UnknownLabel { .. } | Error::OutOfRange { .. } | Error::Data(_) | Error::Insufficient(_) => {
                ErrorCategory::Data
            }
            Error::Dimension { .. } | Error::NonFinite(_) | Error::NoConvergence { .. } | Error::Diverged { .. } | Error::Model(_) => {
                ErrorCategory::Model
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Model,
}
