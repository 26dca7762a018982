use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested L^p order is not strictly below the stability index, so
    /// the moment may be infinite.
    #[error("moment order p = {p} must satisfy 1 < p < alpha = {alpha}")]
    MomentOrder { p: f64, alpha: f64 },

    #[error("empty sample")]
    EmptySample,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Path families were not generated from the same seed manifest.
    #[error("path families are not matched by seed: {0}")]
    UnmatchedSeeds(String),

    #[error("hypothesis {name} violated at {witness:?}: {detail}")]
    HypothesisViolation {
        name: String,
        witness: Vec<f64>,
        detail: String,
    },

    #[error("{excluded} of {total} paths or steps diverged (limit 0.1%)")]
    Divergence { excluded: usize, total: usize },

    #[error("fit failed: {0}")]
    Fit(String),

    /// The two-time Kolmogorov-Smirnov check rejected stationarity.
    #[error("marginal not relaxed: KS statistic {statistic:.5} exceeds critical value {critical:.5}")]
    NotRelaxed { statistic: f64, critical: f64 },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Uniform check for `1 < p < alpha`.
pub fn check_moment_order(p: f64, alpha: f64) -> Result<()> {
    if p > 1.0 && p < alpha {
        Ok(())
    } else {
        Err(Error::MomentOrder { p, alpha })
    }
}
