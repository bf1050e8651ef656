use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("element index {index} out of range ({len} elements)")]
    ElementIndex { index: usize, len: usize },
    #[error("degenerate element {index}: signed area {area:e}")]
    DegenerateElement { index: usize, area: f64 },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("vertex {vertex} has non-positive size {value}")]
    NonPositiveSize { vertex: usize, value: f64 },
    #[error("vertex {0} belongs to no element")]
    IsolatedVertex(usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fields are defined on different meshes")]
    MeshMismatch,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("mesh generator `{0}` not found")]
    GeneratorNotFound(String),
    #[error("mesh generator failed: {0}")]
    GeneratorFailed(String),
    #[error("{path}:{line}: {msg}")]
    Msh { path: PathBuf, line: usize, msg: String },
    #[error("unsupported MSH format version {0}")]
    MshVersion(String),
    #[error("refinement closure exceeded {0} rounds")]
    ClosureCap(usize),

    #[error("coefficient a = {value} is not positive at ({x}, {y})")]
    NonPositiveCoefficient { value: f64, x: f64, y: f64 },
    #[error("linear solver stopped after {iterations} iterations with relative residual {residual:e}")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("field evaluation failed: {0}")]
    Evaluation(String),

    #[error("invalid network: {0}")]
    Network(String),
    #[error("training produced a non-finite loss after {adam_epochs} Adam epochs and {lbfgs_iters} L-BFGS iterations")]
    TrainingDiverged { adam_epochs: usize, lbfgs_iters: usize },

    #[error("power-law fit: {0}")]
    Fit(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("malformed records: {0}")]
    Records(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
