use thiserror::Error;

/// Failures of a CLI run, each tied to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("missing factor {factor} for transition {transition}: {reason}")]
    MissingFactor {
        transition: String,
        factor: &'static str,
        reason: String,
    },
    #[error(transparent)]
    Core(#[from] dipolewave::Error),
}

impl CliError {
    /// 2 configuration, 3 input/output, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        use dipolewave::Error as E;
        match self {
            CliError::Config(_) | CliError::MissingFactor { .. } => 2,
            CliError::Core(e) => match e {
                E::Domain(_) | E::ZernikeIndex { .. } => 2,
                E::Io { .. } | E::Parse { .. } | E::Image { .. } => 3,
                E::UndefinedOverlap(_)
                | E::Convergence(_)
                | E::Determinacy(_)
                | E::Coverage { .. }
                | E::Conditioning { .. }
                | E::Sampling(_) => 4,
            },
        }
    }
}
