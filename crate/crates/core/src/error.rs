use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state space mismatch in {0}")]
    SpaceMismatch(&'static str),

    #[error("invalid state space: {0}")]
    InvalidSpace(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("kernel row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("potential must be strictly positive and finite, found {value} at state {state}")]
    InvalidPotential { state: usize, value: f64 },

    #[error("time index {index} out of range (horizon {horizon})")]
    IndexOutOfRange { index: usize, horizon: usize },

    #[error("regime mismatch: {0}")]
    Regime(String),

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("no mixing certificate at lag {k}: epsilon is zero")]
    CertificateAbsent { k: usize },

    #[error("selection scheme incompatible with potential: {0}")]
    InvalidScheme(String),

    #[error("degenerate mutation at step {0}: zero mass and zero immigration")]
    DegenerateMutation(usize),

    #[error("mass {mass} at step {step} outside envelope [{lower}, {upper}]")]
    EnvelopeViolation {
        step: usize,
        mass: f64,
        lower: f64,
        upper: f64,
    },

    #[error("population of {size} at step {step} exceeds the cap {cap}")]
    PopulationCap { step: usize, size: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
