use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or inputs caught before any numerical work.
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] mcce::Error),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    /// 0 success, 2 validation, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
            CliError::Context { source, .. } => source.exit_code(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        CliError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn invalid<T>(message: impl Into<String>) -> CliResult<T> {
    Err(CliError::Validation(message.into()))
}
