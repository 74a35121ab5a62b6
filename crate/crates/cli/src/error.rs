use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] suwr_core::Error),
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_VIOLATION: i32 = 5;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use suwr_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) => match e {
                E::Validation(_) | E::Capacity(_) => EXIT_CONFIG,
                E::Dimension { .. } | E::Reselection { .. } | E::Io { .. } | E::Format { .. } => EXIT_DATA,
                E::Numeric(_) | E::Solver { .. } | E::Conversion { .. } | E::Training { .. } => EXIT_NUMERIC,
            },
        }
    }
}
