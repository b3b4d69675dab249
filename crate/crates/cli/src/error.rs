use thiserror::Error;

/// Failures of a CLI run, each mapped to a documented exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical singularity: {0}")]
    Singular(String),

    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Model(optospring::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Singular(_) => 3,
            CliError::NonConvergence(_) => 4,
            CliError::Io(_) | CliError::Model(_) => 1,
        }
    }
}

impl From<optospring::Error> for CliError {
    fn from(e: optospring::Error) -> Self {
        use optospring::Error as E;
        match e {
            E::InvalidParameter { .. } | E::NoMeasurement | E::DegenerateDissipation => {
                CliError::Config(e.to_string())
            }
            E::Singular { .. } | E::StabilityBoundary => CliError::Singular(e.to_string()),
            E::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            E::NoDipFound => CliError::Model(e),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}
