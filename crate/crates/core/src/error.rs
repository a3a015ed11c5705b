use thiserror::Error;

/// Errors raised by the numeric kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("row {row} has norm below 1e-15 and cannot be L2-normalized")]
    ZeroVector { row: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("requested {k} archetypes but only {n} data points are available")]
    KTooLarge { k: usize, n: usize },

    #[error("archetype objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("{k} vertices cannot be affinely independent in dimension {dim}")]
    TooManyVertices { k: usize, dim: usize },

    #[error("row {row} of the coefficient matrix is off the simplex (sum {sum})")]
    SimplexViolation { row: usize, sum: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("validation split contains a single class after {attempts} attempts")]
    SingleClassValidation { attempts: usize },

    #[error("labels contain a single class")]
    SingleClass,

    #[error("evaluation set is empty")]
    EmptySet,
}

pub type Result<T, E = GeoError> = std::result::Result<T, E>;
