use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid flow spec: {0}")]
    InvalidFlow(String),

    #[error("invalid bump spec: {0}")]
    InvalidBump(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The fixed-point inversion of the cocycle did not reach tolerance.
    #[error(
        "inversion did not converge at a = ({}, {}) after {iterations} iterations (residual {residual:e})",
        a[0], a[1]
    )]
    NonConvergence {
        a: [f64; 2],
        point: String,
        iterations: usize,
        residual: f64,
    },

    /// Power iteration for a coarse direction failed to settle.
    #[error("coarse direction estimate for {label} did not settle (last change {change:e})")]
    DirectionNotSettled { label: String, change: f64 },

    /// The tracked separation fell into a faster-contracting direction.
    #[error("separation for {label} collapsed to {size:e} at step {step}")]
    DegenerateDirection {
        label: String,
        step: usize,
        size: f64,
    },
}
