use std::fmt;

use fracfit_core::{DataError, ModelError, PsoError};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SIMULATION: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_OPTIMIZATION: i32 = 5;

/// A terminal failure: one message line and the process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl fmt::Display) -> Self {
        Self::new(EXIT_CONFIG, msg)
    }

    pub fn simulation(msg: impl fmt::Display) -> Self {
        Self::new(EXIT_SIMULATION, msg)
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self::new(EXIT_DATA, msg)
    }

    fn new(code: i32, msg: impl fmt::Display) -> Self {
        // Keep the terminal message on a single line.
        let message = msg.to_string().replace(['\n', '\r'], " ");
        Self { code, message }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Model(m) => Self::simulation(m),
            other => Self::data(other),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::simulation(e)
    }
}

impl From<PsoError> for CliError {
    fn from(e: PsoError) -> Self {
        match e {
            PsoError::Config(_) => Self::config(e),
            PsoError::NoData | PsoError::RawData(_) => Self::data(e),
            PsoError::Optimization(_) => Self::new(EXIT_OPTIMIZATION, e),
        }
    }
}
