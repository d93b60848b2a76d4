use divcomb_core::Error as CoreError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, PartialEq, Eq, Clone, Copy)]
pub enum Kind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Usage,
            message: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Data,
            message: msg.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Usage => 2,
            Kind::Data => 3,
            Kind::Numeric => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match e {
            CoreError::InvalidArgument(_) => Kind::Usage,
            CoreError::Numeric(_) => Kind::Numeric,
            CoreError::LengthMismatch(_) | CoreError::Parse { .. } | CoreError::Io { .. } => Kind::Data,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
