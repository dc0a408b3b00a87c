use alloc::string::String;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: max |A - A^H| = {deviation:e}")]
    NotHermitian { deviation: f64 },
    #[error("eigendecomposition did not converge after {iterations} sweeps")]
    NoConvergence { iterations: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} below tolerance (max {max:e})")]
    NotPsd { eigenvalue: f64, max: f64 },
    #[error("parameter slot {slot} out of range for {len} parameters")]
    SlotOutOfRange { slot: usize, len: usize },
    #[error("qubit index {index} out of range for {qubits} qubits")]
    QubitOutOfRange { index: usize, qubits: usize },
    #[error("parameter vector has length {found}, circuit expects {expected}")]
    ParamLength { expected: usize, found: usize },
    #[error("invalid gate: {0}")]
    InvalidGate(String),
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid measurement protocol: {0}")]
    InvalidProtocol(String),
    #[error("gate {gate} is not compatible with the parameter-shift rule")]
    NotShiftCompatible { gate: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("token {token} at position {position} is out of range for {qubits} qubits")]
    InvalidToken {
        position: usize,
        token: usize,
        qubits: usize,
    },
    #[error("gate {gate} cannot be expressed as a token")]
    NotTokenExpressible { gate: usize },
    #[error("non-finite gradient at index {index}")]
    NonFiniteGradient { index: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;
