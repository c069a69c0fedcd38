use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("qubit {qubit} out of range for {num_qubits} qubits")]
    QubitRange { qubit: usize, num_qubits: usize },
    #[error("duplicate target qubit {0}")]
    DuplicateTarget(usize),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("post-selection impossible at step {step} (success probability {prob:e})")]
    ZeroSuccess { step: usize, prob: f64 },
    #[error("invalid operator: {0}")]
    Operator(String),
    #[error("singular value decomposition did not converge")]
    Svd,
    #[error("dense cap exceeded: {sites} sites > {cap}")]
    DenseCap { sites: usize, cap: usize },
    #[error("invalid model: {0}")]
    Model(String),
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("matrix numerically singular (condition estimate {cond:e})")]
    Singular { cond: f64 },
    #[error("bitstring parse error: {0}")]
    Parse(String),
    #[error("parameter count: expected {expected}, found {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
