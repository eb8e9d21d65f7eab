use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid Lorentz tuple: {0}")]
    Lambda(String),
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("invalid potential: {0}")]
    Potential(String),
    #[error("exponent {lambda} is below the Hardy constant {floor}")]
    BelowHardy { lambda: f64, floor: f64 },
    #[error("integer overflow computing {0}")]
    Overflow(String),
    #[error("admissibility violated: {0}")]
    Admissibility(String),
    #[error("harmonic solve failed: {0}")]
    Solver(String),
    #[error("derivative order {order} exceeds available smoothness {max}")]
    Smoothness { order: usize, max: usize },
    #[error("divergent integral: {0}")]
    Divergent(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("ambiguous classification: {0}")]
    Ambiguous(String),
    #[error("mismatched inputs: {0}")]
    Mismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
