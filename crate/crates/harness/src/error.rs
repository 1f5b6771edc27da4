use thiserror::Error;

/// Failure classes of the harness, each with its own process exit code.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[source] guard_core::Error),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

pub type HarnessResult<T> = Result<T, HarnessError>;

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) => 3,
            HarnessError::Runtime(_) => 4,
        }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

impl From<guard_core::Error> for HarnessError {
    fn from(e: guard_core::Error) -> Self {
        use guard_core::Error as E;
        match e {
            E::Io { .. } | E::Parse { .. } | E::IndexRange { .. } | E::Json(_) => HarnessError::Data(e),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}
