use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid type space: {0}")]
    InvalidSpace(String),

    #[error("invalid atom graph: {0}")]
    InvalidAtom(String),

    #[error("kernel arity {kernel} does not match atom size {atom}")]
    ArityMismatch { kernel: usize, atom: usize },

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("arity {arity} exceeds the tensor-quadrature limit ({limit})")]
    ArityTooLarge { arity: usize, limit: usize },

    #[error("kernel has no finite thinning bound: {0}")]
    UnboundedKernel(String),

    #[error("expected atom count {expected:.3e} exceeds the budget {budget:.3e}")]
    IntensityOverflow { expected: f64, budget: f64 },

    #[error("edge kernel diverges; the operator is not defined")]
    DivergentKernel,

    #[error("iteration did not converge after {iterations} steps (last step {residual:.3e})")]
    MaxIterExceeded {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("atom has {edges} edges, more than the limit of {limit}")]
    TooManyEdges { edges: usize, limit: usize },

    #[error("no percolation threshold: the family is subcritical even at p = 1")]
    NoThreshold,

    #[error("clustering coefficient undefined: the graph has no paths of length 2")]
    UndefinedForNoPaths,

    #[error("mixing coefficient undefined: endpoint degrees have zero variance")]
    DegenerateDegrees,

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
