use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("density matrix has eigenvalue {0:.3e} below -1e-10")]
    NegativeEigenvalue(f64),

    #[error("state is not normalized (norm^2 = {0:.12})")]
    Unnormalized(f64),

    #[error(
        "step {step:.3e} exceeds the oscillation bound {bound:.3e} \
         (fastest frequency {frequency:.3e} rad/us)"
    )]
    StepTooLarge {
        step: f64,
        bound: f64,
        frequency: f64,
    },

    #[error("time {t} is outside [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("index {index} out of range for dimension {dim}")]
    InvalidIndex { index: usize, dim: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
