//! Command-level error taxonomy.
//!
//! Every failure a command can hit is folded into one of three buckets that
//! map one-to-one onto process exit codes: unusable configuration (2),
//! unusable input data (3), and non-finite numerics (4).

use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    /// The run cannot start: bad flags, unparseable config, or parameter
    /// combinations rejected before any compute.
    #[error("config error: {0}")]
    Config(String),
    /// Inputs are missing, unreadable, malformed, or too small.
    #[error("data error: {0}")]
    Data(String),
    /// A NaN or infinity surfaced inside the numerical pipeline.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CmdError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CmdError::Config(_) => ExitCode::from(2),
            CmdError::Data(_) => ExitCode::from(3),
            CmdError::Numeric(_) => ExitCode::from(4),
        }
    }
}

pub type CmdResult<T> = Result<T, CmdError>;

/// Core errors raised while crunching user data: non-finite values keep
/// their own exit code, everything else indicts the data.
pub fn core_data(e: deepsc_core::Error) -> CmdError {
    match e {
        deepsc_core::Error::NonFinite(what) => CmdError::Numeric(format!("non-finite value in {what}")),
        other => CmdError::Data(other.to_string()),
    }
}

/// Like [`core_data`], with a context prefix naming the failing input.
pub fn core_data_with(context: &str, e: deepsc_core::Error) -> CmdError {
    match core_data(e) {
        CmdError::Numeric(msg) => CmdError::Numeric(format!("{context}: {msg}")),
        CmdError::Data(msg) => CmdError::Data(format!("{context}: {msg}")),
        other => other,
    }
}

/// Core errors raised while validating a configuration, before compute.
pub fn core_config(e: deepsc_core::Error) -> CmdError {
    CmdError::Config(e.to_string())
}

macro_rules! config_error {
    ($($arg:tt)*) => {
        $crate::error::CmdError::Config(format!($($arg)*))
    };
}

macro_rules! data_error {
    ($($arg:tt)*) => {
        $crate::error::CmdError::Data(format!($($arg)*))
    };
}

pub(crate) use {config_error, data_error};
