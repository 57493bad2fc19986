use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("cannot write output: {0}")]
    Output(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Output(_) => 2,
            CliError::Numeric(_) => 5,
        }
    }
}

impl From<recapture::Error> for CliError {
    fn from(e: recapture::Error) -> Self {
        use recapture::Error as E;
        match e {
            E::QuadratureNonConvergence { .. } | E::NonFinite { .. } | E::NoFiniteMle(_) => {
                CliError::Numeric(e.to_string())
            }
            E::Io(_) | E::Validation(_) | E::InvalidArgument(_) | E::Json(_) | E::Csv(_) => {
                CliError::Input(e.to_string())
            }
        }
    }
}

/// Outcome of a completed command, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    ProprietyWarning,
    Disagreement,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::ProprietyWarning => 3,
            Status::Disagreement => 4,
        }
    }
}
