use thiserror::Error;

/// Exit status for validation problems (bad config, bad arguments, misaligned inputs).
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status when a numerical engine failed.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{source_name}: {message}")]
    Parse { source_name: String, message: String },

    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("cannot align {left} and {right}: {message}")]
    Alignment { left: String, right: String, message: String },

    #[error("{failed} engine run(s) failed; see summary.csv")]
    EngineFailures { failed: usize },

    #[error(transparent)]
    Core(#[from] mpf_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation { .. } | CliError::Io { .. } | CliError::Alignment { .. } => {
                EXIT_VALIDATION
            }
            CliError::EngineFailures { .. } => EXIT_NUMERIC,
            CliError::Core(e) if e.is_validation() => EXIT_VALIDATION,
            CliError::Core(_) => EXIT_NUMERIC,
        }
    }
}
