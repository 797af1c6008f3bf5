use thiserror::Error;

/// Errors raised across the simulator.
///
/// The variants are coarse on purpose: the scenario runner maps each one
/// onto a process exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("geometric condition violated: {0}")]
    Geometry(String),

    #[error("regions overlap: {0}")]
    RegionOverlap(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("audit failure: {0}")]
    Audit(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code of the scenario runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Mesh(_) | Error::Assumption(_) | Error::Io(_) | Error::Format(_) => 2,
            Error::Geometry(_) | Error::RegionOverlap(_) => 3,
            Error::Solver(_) | Error::NonConvergence(_) | Error::State(_) => 4,
            Error::Audit(_) => 5,
        }
    }

    /// Prefixes the message, keeping the variant.
    pub fn context(self, what: &str) -> Self {
        match self {
            Error::Parameter(m) => Error::Parameter(format!("{what}: {m}")),
            Error::Mesh(m) => Error::Mesh(format!("{what}: {m}")),
            Error::Geometry(m) => Error::Geometry(format!("{what}: {m}")),
            Error::RegionOverlap(m) => Error::RegionOverlap(format!("{what}: {m}")),
            Error::Assumption(m) => Error::Assumption(format!("{what}: {m}")),
            Error::Solver(m) => Error::Solver(format!("{what}: {m}")),
            Error::NonConvergence(m) => Error::NonConvergence(format!("{what}: {m}")),
            Error::State(m) => Error::State(format!("{what}: {m}")),
            Error::Audit(m) => Error::Audit(format!("{what}: {m}")),
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{what}: {e}"))),
            Error::Format(m) => Error::Format(format!("{what}: {m}")),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
