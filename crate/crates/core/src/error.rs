use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("regrid Newton iteration failed to converge at node {node}")]
    Regrid { node: usize },
    #[error("non-finite kernel entry at ({i}, {j})")]
    Kernel { i: usize, j: usize },
    #[error("degenerate surface parametrization at node {node}")]
    DegenerateGeometry { node: usize },
    #[error("singular dipole system (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("iterative dipole solve stalled after {iterations} iterations (residual {residual:e})")]
    KrylovStall { iterations: usize, residual: f64 },
    #[error("numerical blow-up detected at step {step}")]
    BlowUp { step: usize },
    #[error("state is not at rest (max |phi| = {max_phi:e})")]
    NotAtRest { max_phi: f64 },
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("eigensolver failure: {0}")]
    Eigen(String),
    #[error("index out of range: {0}")]
    Index(String),
}

pub type Result<T> = std::result::Result<T, Error>;
