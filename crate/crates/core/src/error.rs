use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("field has {got} values, grid has {expected} points")]
    FieldLength { expected: usize, got: usize },

    #[error("real field has a nonzero imaginary part at index {0}")]
    NotReal(usize),

    #[error("multi-index has length {got}, grid dimension is {expected}")]
    MultiIndexLength { expected: usize, got: usize },

    #[error("dense backend limited to {max} points, grid has {points}")]
    DenseTooLarge { points: usize, max: usize },

    #[error("symbol has {got} entries, grid has {expected} points")]
    SymbolLength { expected: usize, got: usize },

    #[error("operator is not right-invertible: smallest modulus {min_modulus:e}")]
    NotRightInvertible { min_modulus: f64 },

    #[error("parameter spaces differ: {0}")]
    SpaceMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("result leaves the nowhere-vanishing set at component {index}")]
    VanishingResult { index: usize },

    #[error("component {index} has no square root in this space")]
    NoSquareRoot { index: usize },

    #[error("cannot embed degree {from} into degree {to}")]
    EmbedDegree { from: usize, to: usize },

    #[error("operator is not a scalar multiple of the identity (residual {residual:e})")]
    NotInImage { residual: f64 },

    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("coefficient function vanishes at {eps:?}")]
    VanishingCoefficient { eps: Vec<Complex64> },

    #[error("coefficient function {0} has no declared inverse")]
    NotInvertible(String),

    #[error("inconsistent polynomial: {0}")]
    InconsistentPoly(String),

    #[error("theory `{theory}` is not certified {property}: {detail}")]
    MissingCertificate {
        theory: String,
        property: &'static str,
        detail: String,
    },

    #[error("hypothesis mismatch: {0}")]
    HypothesisMismatch(String),

    #[error("hypothesis {number} ({description}) is missing or unverified")]
    MissingHypothesis { number: usize, description: String },

    #[error("ambient theory is not affine in its parameters: {0}")]
    NotAffine(String),

    #[error("operator is neither self-adjoint (defect {defect:e}) nor declared coercive")]
    NotSelfAdjoint { defect: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
