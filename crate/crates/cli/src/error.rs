use std::fmt;
use std::process::ExitCode;

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum CliError {
    /// A check ran and did not pass.
    Verification(String),
    /// Bad flags, config keys or values.
    Usage(String),
    /// Missing, unreadable, unwritable or malformed files.
    Io(String),
}

impl CliError {
    pub fn code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Verification(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<flvae::Error> for CliError {
    fn from(e: flvae::Error) -> Self {
        use flvae::Error as E;
        match e {
            E::Io(_) | E::Csv(_) | E::Parse { .. } => CliError::Io(e.to_string()),
            E::Dimension { .. } | E::Parameter { .. } | E::Config(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<image::ImageError> for CliError {
    fn from(e: image::ImageError) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a path to an I/O failure.
pub fn at_path<T>(r: Result<T, impl Into<CliError>>, path: &std::path::Path) -> CliResult<T> {
    r.map_err(|e| match e.into() {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => other,
    })
}
