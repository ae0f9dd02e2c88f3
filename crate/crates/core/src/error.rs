use thiserror::Error;

/// Failures raised by the polytope, quadrature and functional layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("polytope is unbounded along direction {direction:?}")]
    Unbounded { direction: Vec<f64> },
    #[error("polytope has empty interior")]
    EmptyInterior,
    #[error("polytope is not simple: vertex {vertex:?} lies on {facets} facets")]
    NotSimple { vertex: Vec<f64>, facets: usize },
    #[error("label {index} is redundant: {reason}")]
    RedundantLabel { index: usize, reason: String },
    #[error("basepoint {0:?} is not interior")]
    InvalidBasepoint(Vec<f64>),
    #[error("weight is not positive at vertex {vertex:?} (value {value})")]
    NonPositiveWeight { vertex: Vec<f64>, value: f64 },
    #[error("degenerate simplex (volume {volume})")]
    DegenerateSimplex { volume: f64 },
    #[error("integrand is not finite at node {point:?}")]
    NodeEvaluationFailure { point: Vec<f64> },
    #[error("potential evaluated on the boundary at {point:?}")]
    BoundaryEvaluation { point: Vec<f64> },
    #[error("Hessian is not positive definite at {point:?}")]
    NotConvexAt { point: Vec<f64> },
    #[error("potential is not in the admissible class: {0}")]
    NotAdmissible(String),
    #[error("Gram matrix is ill-conditioned (condition number {condition:e})")]
    IllConditionedGram { condition: f64 },
    #[error("test function is not normalized: {0}")]
    NotNormalized(String),
    #[error("boundary conditions violated: {0}")]
    BoundaryConditions(String),
    #[error("line search found no convexity-preserving step above {min_step:e}")]
    LostConvexity { min_step: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Whether the failure is a rejected input rather than a numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Unbounded { .. }
                | Error::EmptyInterior
                | Error::NotSimple { .. }
                | Error::RedundantLabel { .. }
                | Error::InvalidBasepoint(_)
                | Error::NonPositiveWeight { .. }
                | Error::NotAdmissible(_)
                | Error::NotNormalized(_)
        )
    }
}
