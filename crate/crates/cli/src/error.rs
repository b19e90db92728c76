use pmil::dataio::DataError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Numeric failure or a bug.
    #[error("{0}")]
    Internal(String),
    /// Missing or unreadable path, malformed file, invalid config.
    #[error("{0}")]
    Input(String),
    /// Unknown bag id or class index.
    #[error("{0}")]
    Reference(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Input(_) => 2,
            CliError::Reference(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<pmil::Error> for CliError {
    fn from(e: pmil::Error) -> Self {
        use pmil::Error as E;
        match e {
            E::Data(d) => d.into(),
            E::LabelOutOfRange { .. } => CliError::Reference(e.to_string()),
            E::Shape(_) | E::InvalidArgument(_) | E::EmptyDataset(_) => {
                CliError::Input(e.to_string())
            }
            E::NonFinite(_) | E::EnumerationLimit { .. } => CliError::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
