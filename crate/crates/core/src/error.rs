use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("missing configuration `{0}` for the requested level system")]
    MissingConfig(&'static str),

    #[error("operation not supported for {0}")]
    Unsupported(String),

    #[error("unknown level label `{0}`")]
    UnknownLabel(String),

    #[error("step size underflow at t = {time} ps (step {step:.3e} ps, local error {error:.3e})")]
    StepUnderflow { time: f64, step: f64, error: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("non-uniform sampling: step deviation {deviation:.3e} exceeds tolerance")]
    NonUniformSampling { deviation: f64 },

    #[error("optimum at the edge of the search range (delta = {delta_mev} meV, stokes area = {stokes_area} rad)")]
    Unbracketed { delta_mev: f64, stokes_area: f64 },

    #[error("no usable pi condition: best transfer {transfer:.4}")]
    NoPiCondition { transfer: f64 },
}
