//! Error classes that map onto exit codes: usage mistakes exit 1,
//! runtime failures exit 2.

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, missing values, malformed config entries.
    Usage(String),
    /// Everything that fails after the arguments were understood.
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl From<cadenza::Error> for CliError {
    fn from(e: cadenza::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
