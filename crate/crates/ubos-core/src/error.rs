//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by simulator, algebra and optimizer operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (left {left}, right {right})")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("qubit index {qubit} out of range for {n_qubits} qubits")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("{family} expects {expected} parameters, got {got}")]
    ParamCount {
        family: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("system size {n_qubits} exceeds the ground-state solver cap of {cap} qubits")]
    GroundStateCap { n_qubits: usize, cap: usize },

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("overlap matrix is indefinite (smallest eigenvalue {eigenvalue:.3e})")]
    IndefiniteOverlap { eigenvalue: f64 },

    #[error("sample set is rank deficient: rank {got}, need {need}")]
    RankDeficient { got: usize, need: usize },

    #[error("operator basis does not span the target matrix (residual {residual:.3e})")]
    BasisDoesNotSpan { residual: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
