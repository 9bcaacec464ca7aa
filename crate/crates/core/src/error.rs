use alloc::vec::Vec;

/// Failures raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid interval [{left}, {right}]: left endpoint must be below right endpoint")]
    InvalidInterval { left: f64, right: f64 },

    #[error("mesh size {h} does not divide the interval [{left}, {right}] into a whole number of elements")]
    NonDivisibleInterval { left: f64, right: f64, h: f64 },

    #[error("invalid time grid: step {dt} over [{start}, {end}]")]
    InvalidTimeGrid { start: f64, end: f64, dt: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("zero pivot in tridiagonal solve at row {row}")]
    ZeroPivot { row: usize },

    #[error("singular step matrix at time level {level} (row {row})")]
    SingularStep { level: usize, row: usize },

    #[error("dry state at node {node}: water depth {depth} is not positive")]
    DryState { node: usize, depth: f64 },

    #[error("Newton iteration did not converge at time step {step} after {} iterations", residuals.len())]
    NewtonNotConverged { step: usize, residuals: Vec<f64> },

    #[error("non-finite value produced at time step {step}")]
    NonFinite { step: usize },

    #[error("step-size denominator vanished: search direction is null")]
    NullDirection,

    #[error("reference field has zero norm")]
    ZeroNormReference,
}

pub type Result<T> = core::result::Result<T, Error>;
