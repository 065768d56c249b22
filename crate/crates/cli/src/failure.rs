use std::fmt;

/// Exit status with a message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

/// Validation or verification failed.
pub const EXIT_INVALID: u8 = 1;
/// I/O or configuration problem.
pub const EXIT_CONFIG: u8 = 2;

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<mlspline::Error> for Failure {
    fn from(e: mlspline::Error) -> Self {
        use mlspline::Error as E;
        match e {
            E::Io(_) | E::Json(_) | E::Csv(_) => Self::config(e.to_string()),
            _ => Self::invalid(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::config(e.to_string())
    }
}
