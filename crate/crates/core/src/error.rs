use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Every invariant violation found while checking a spec or config.
    #[error("validation failed:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("trace drifted to {trace:.3e} at t = {time_fs} fs (|drift| = {drift:.3e} > guard {guard:.1e})")]
    TraceGuard {
        time_fs: f64,
        trace: f64,
        drift: f64,
        guard: f64,
    },

    #[error("dense state dimension {dim} exceeds the ceiling {ceiling}")]
    DimensionCeiling { dim: usize, ceiling: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status: 2 for invalid input, 3 for a trace-guard abort,
    /// 4 for I/O and checkpoint failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Config(_) | Error::Domain(_) | Error::Shape(_) => 2,
            Error::DimensionCeiling { .. } => 2,
            Error::TraceGuard { .. } => 3,
            Error::Io(_) | Error::Csv(_) | Error::Checkpoint(_) => 4,
            Error::Quadrature(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
