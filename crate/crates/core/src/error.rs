use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator and its building blocks.
#[derive(Debug, Error)]
pub enum SimError {
    /// A measured or computed signal was NaN or infinite.
    #[error("signal integrity: {0} is not finite")]
    SignalIntegrity(&'static str),

    /// Invalid parameter or scenario document. `path` is the key path when known.
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two values that must share a reference frame did not.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A plant state left the plausible range.
    #[error("simulation blow-up at t = {time:.6} s: state `{state}` = {value:e}")]
    BlowUp {
        time: f64,
        state: String,
        value: f64,
    },

    /// A PV DC link discharged to zero.
    #[error("DC-link collapse on {source_name} at t = {time:.6} s")]
    DcLinkCollapse { source_name: String, time: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        SimError::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
