//! Crate-wide error type. Variants map onto how callers should react:
//! `Config` means a structurally invalid configuration, `Argument` a bad
//! call against a valid configuration, `Lookup` a missing archive entry,
//! `Internal` a broken invariant inside this crate, and `NonFinite` a
//! numerical failure during training that aborts before corrupting state.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration (grid geometry, detector parameters, ...).
    Config(String),
    /// Invalid argument to an otherwise well-configured operation.
    Argument(String),
    /// A replay archive has no entry for the requested key.
    Lookup(String),
    /// Metric is undefined for the given inputs (e.g. no ground truth at all).
    UndefinedMetric(String),
    /// Inconsistent internal state, e.g. a forward cache from another model.
    Internal(String),
    /// Non-finite value produced during training; the model retains the last
    /// successfully applied update.
    NonFinite {
        epoch: usize,
        step: usize,
        detail: String,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Argument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Lookup(msg) => write!(f, "lookup failed: {msg}"),
            Error::UndefinedMetric(msg) => write!(f, "metric undefined: {msg}"),
            Error::Internal(msg) => write!(f, "internal error: {msg}"),
            Error::NonFinite { epoch, step, detail } => {
                write!(f, "non-finite value at epoch {epoch} step {step}: {detail}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
