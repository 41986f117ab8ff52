use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Core(stnn::Error),
    Config(String),
    GradCheck(String),
}

impl CliError {
    /// 2 configuration, 3 I/O, 4 divergence, 5 failed derivative check.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(stnn::Error::Io { .. }) => 3,
            CliError::Core(stnn::Error::Divergence { .. }) => 4,
            CliError::GradCheck(_) => 5,
            CliError::Core(_) | CliError::Config(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::GradCheck(msg) => write!(f, "gradient check failed: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<stnn::Error> for CliError {
    fn from(e: stnn::Error) -> Self {
        CliError::Core(e)
    }
}
