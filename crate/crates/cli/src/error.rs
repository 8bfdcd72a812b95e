use thiserror::Error;

/// Command failure, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<mfuq_core::Error> for CliError {
    fn from(e: mfuq_core::Error) -> Self {
        use mfuq_core::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidParameter(_) | E::InvalidConfig(_) => CliError::Config(msg),
            E::DegenerateDimension { .. }
            | E::DimensionMismatch { .. }
            | E::OutOfCube
            | E::VersionMismatch { .. }
            | E::CorruptCheckpoint(_) => CliError::Data(msg),
            E::GammaOutOfRange(_) | E::DegenerateWeights | E::NonFinite(_) | E::NonConvergence(_) => {
                CliError::Numeric(msg)
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
