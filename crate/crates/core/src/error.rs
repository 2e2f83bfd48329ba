use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not an FGRD file")]
    BadMagic { path: PathBuf },
    #[error("{path}: size mismatch (expected {expected} bytes, found {found})")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("empty dims")]
    EmptyDims,
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("simulation became unstable at step {step}")]
    Unstable { step: usize },
    #[error("CFL violation: try a time step of at most {suggested_dt:.3e}")]
    Cfl { suggested_dt: f64 },
    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("non-zero-mean vorticity (mean {mean:.3e})")]
    NonZeroMean { mean: f64 },
    #[error("bound inapplicable: denominator {denominator:.3e} is not positive")]
    BoundInapplicable { denominator: f64 },
    #[error("zero reference norm")]
    ZeroReference,
    #[error("empty observation set")]
    EmptyObservations,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("missing files: {0:?}")]
    MissingFiles(Vec<PathBuf>),
    #[error("image error: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// True for failures of the numerics (divergence, instability, NaN) as
    /// opposed to bad input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Unstable { .. }
                | Error::Cfl { .. }
                | Error::NoConvergence { .. }
                | Error::Numerical(_)
                | Error::NonFinite { .. }
        )
    }
}
