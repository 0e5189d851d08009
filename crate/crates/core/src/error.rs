use thiserror::Error;

/// Errors produced by the geometry, solver and verification layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("zero level set touches the outer margin at node ({i}, {j})")]
    MarginViolation { i: usize, j: usize },

    #[error("ball of radius {r} centred at ({x}, {y}) leaves the grid")]
    OutOfDomain { x: f64, y: f64, r: f64 },

    #[error("fields are defined on different grids")]
    GridMismatch,

    #[error("deformation is too large: |D(tT)| = {0} exceeds 1/2")]
    DeformationTooLarge(f64),

    #[error("inverse deformation did not converge at node {node} (residual {residual:e})")]
    DeformationInversion { node: usize, residual: f64 },

    #[error("degenerate level-set gradient |grad phi| = {norm} near ({x}, {y})")]
    DegenerateGradient { norm: f64, x: f64, y: f64 },

    #[error("domain has {found} interior nodes, at least {required} are required")]
    TooFewInteriorNodes { found: usize, required: usize },

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    SolverStall { iterations: usize, residual: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("box constraint violated at {} node(s), first {:?}", nodes.len(), nodes.first())]
    ConstraintViolation { nodes: Vec<usize> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("time step {dt} exceeds the CFL limit {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
