use std::fmt;

use foodrescue::ErrorClass;

#[derive(Debug)]
pub enum CliError {
    Core(foodrescue::Error),
    /// Bad flags or configuration.
    Validation(String),
    /// Output could not be written.
    Output { path: String, message: String },
    /// A run finished but failed its own consistency checks.
    Internal { module: &'static str, message: String },
}

impl CliError {
    pub fn module(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.module(),
            CliError::Validation(_) => "cli",
            CliError::Output { .. } => "io",
            CliError::Internal { module, .. } => module,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Data => 3,
                ErrorClass::Internal => 4,
            },
            CliError::Validation(_) => 2,
            CliError::Output { .. } | CliError::Internal { .. } => 4,
        }
    }

    pub fn output(path: &std::path::Path, e: impl fmt::Display) -> Self {
        CliError::Output {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Validation(m) => f.write_str(m),
            CliError::Output { path, message } => write!(f, "{path}: {message}"),
            CliError::Internal { message, .. } => f.write_str(message),
        }
    }
}

impl<E: Into<foodrescue::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Core(e.into())
    }
}
