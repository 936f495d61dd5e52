use loadopt::dataio::DataError;
use loadopt::doe::DesignError;
use loadopt::linmod::LinModError;
use loadopt::shotsim::SimError;
use loadopt::surface::SurfaceError;

/// Exit 1 for bad input, 2 for a well-formed input the analysis cannot handle.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Computation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Computation(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Computation(m) => m,
        }
    }
}

impl From<LinModError> for CliError {
    fn from(e: LinModError) -> Self {
        use LinModError::*;
        match e {
            NoRows
            | DimensionMismatch { .. }
            | TooFewLevels { .. }
            | InvalidDegreesOfFreedom { .. }
            | InvalidStatistic(_) => CliError::Computation(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SurfaceError> for CliError {
    fn from(e: SurfaceError) -> Self {
        match e {
            SurfaceError::AllEmpty => CliError::Computation(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Model(m) => m.into(),
            DataError::Surface(s) => s.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Data(d) => d.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}
