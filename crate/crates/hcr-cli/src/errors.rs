use hcr::HcrError;

/// CLI-level error classes, mapped onto exit codes: usage errors exit 1,
/// data errors 2, numeric errors 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Data(msg) | CliError::Numeric(msg) => {
                write!(f, "{msg}")
            }
        }
    }
}

impl From<HcrError> for CliError {
    fn from(err: HcrError) -> Self {
        match err {
            HcrError::InvalidInput(_) => CliError::Data(err.to_string()),
            HcrError::ResourceLimit(_) => CliError::Usage(err.to_string()),
            HcrError::DegenerateScale(_)
            | HcrError::Domain(_)
            | HcrError::NonPositiveContextDensity(_) => CliError::Numeric(err.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
