use ftcs_core::Error as CoreError;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }

    /// 1 usage or input problems, 2 numerical failures, 3 invariant violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Io { .. } => 1,
            Self::Invariant(_) => 3,
            Self::Core(e) => match e {
                CoreError::InvalidFlow(_)
                | CoreError::InvalidGrid(_)
                | CoreError::InvalidDiffusion(_)
                | CoreError::InvalidStencil(_)
                | CoreError::NoTestPoints
                | CoreError::InvalidSolver(_)
                | CoreError::InvalidStudy(_)
                | CoreError::NotCovered(_)
                | CoreError::TooManyTriples { .. } => 1,
                _ => 2,
            },
        }
    }
}
