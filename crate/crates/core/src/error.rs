use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("space dimension must be at least 1 (label `{0}`)")]
    ZeroDimension(String),
    #[error("label `{0}` appears more than once")]
    LabelCollision(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("eigendecomposition did not converge")]
    EigenFailure,
    #[error("map is not trace preserving (residual {0:.3e})")]
    NotTracePreserving(f64),
    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("state does not have unit trace (trace {0:.12})")]
    NotUnitTrace(f64),
    #[error("matrix is not unitary (residual {0:.3e})")]
    NotUnitary(f64),
    #[error("amplitudes are not normalized (|a|^2+|b|^2 = {0:.15})")]
    AmplitudeNormalization(f64),
    #[error("vector is not normalized (norm {0:.15})")]
    VectorNormalization(f64),
    #[error("process is not valid: {0}")]
    InvalidProcess(String),
    #[error("process has not been validated")]
    Unvalidated,
    #[error("wrong number of parties: expected {expected}, found {found}")]
    PartyCount { expected: usize, found: usize },
    #[error("unknown party `{0}`")]
    UnknownParty(String),
    #[error("invalid party order: {0}")]
    InvalidOrder(String),
    #[error("reduction to a state is undefined: party `{0}` has a nontrivial output")]
    NontrivialOutput(String),
    #[error("unequal switch amplitudes: branch norms {0:.15} and {1:.15}")]
    UnequalAmplitudes(f64, f64),
    #[error("instrument invariant violated: {0}")]
    InvalidInstrument(String),
    #[error("probability table invariant violated: {0}")]
    ProbabilityInvariant(String),
    #[error("table is not normalized: {0}")]
    NotNormalized(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("strategy enumeration needs {needed} strategies per order, above the cap of {cap}; use LP-only mode")]
    EnumerationCap { needed: f64, cap: usize },
    #[error("process is separable; no witness to extract")]
    SeparableProcess,
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
