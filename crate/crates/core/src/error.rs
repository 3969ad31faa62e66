use thiserror::Error;

/// Errors raised by the laboratory. Each variant carries enough context to
/// locate the offending input without a debugger.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("non-finite sample {value} at x = {x:?}, t = {t}")]
    NonFinite { x: Vec<f64>, t: f64, value: f64 },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("time stamps not strictly increasing at index {index}")]
    NonIncreasingTimes { index: usize },

    #[error("missing time slices: {0}")]
    MissingTimes(String),

    #[error("metadata mismatch: {0}")]
    Mismatch(String),

    #[error("solver diverged at inner iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("stability bound violated: dt = {dt} exceeds {bound}")]
    Stability { dt: f64, bound: f64 },

    #[error("inadmissible dual field: sup |z| = {0}")]
    Inadmissible(f64),

    #[error("support violation: {0}")]
    Support(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("unknown example {0:?}")]
    UnknownExample(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
