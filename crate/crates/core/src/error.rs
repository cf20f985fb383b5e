use thiserror::Error;

/// Errors raised by the solvers and their input validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} must be {requirement}, got {value}")]
    Domain {
        what: &'static str,
        requirement: &'static str,
        value: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "mesh under-resolved: {n_points} points over {periods:.2} oscillation periods; \
         at least {required} points are needed"
    )]
    Resolution {
        n_points: usize,
        periods: f64,
        required: usize,
    },

    #[error("assemble_kernel needs E <= 0, got E = {energy}; use the scattering solver for E > 0")]
    PositiveEnergy { energy: f64 },

    #[error("linear system is numerically singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("eigenvalue solver failed: {0}")]
    Eigen(String),

    #[error("unitarity violated: |Im(1/T) + k|/k = {deviation:.3e} exceeds {tolerance:.1e}")]
    Unitarity { deviation: f64, tolerance: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("no threshold solution: {0}")]
    NoThresholdSolution(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn positive(what: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            what,
            requirement: "positive and finite",
            value,
        })
    }
}
