use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} outside allowed range [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error(
        "squeezing parameter {value_db:.3} dB exceeds the configured bound of {bound_db:.3} dB"
    )]
    SqueezeBound { value_db: f64, bound_db: f64 },

    #[error("inconsistent moments: {0}")]
    BadMoments(String),

    #[error("moment reduction requested for an unsupported shape: {0}")]
    UnknownMomentShape(String),

    #[error("Fock truncation tail {tail:.3e} above tolerance {tol:.3e} at cutoff {cutoff}")]
    TruncationTail { tail: f64, tol: f64, cutoff: usize },

    #[error("state is not normalized: trace = {0}")]
    NotNormalized(f64),

    #[error("quadrature value {m} outside the reliable range ±{max} for cutoff {cutoff}")]
    QuadratureRange { m: f64, max: f64, cutoff: usize },

    #[error("measurement grid mass {mass} below target {target} after {attempts} refinements")]
    GridMass {
        mass: f64,
        target: f64,
        attempts: usize,
    },

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
