use thiserror::Error;

/// Errors raised by the geometry, flow and time-stepping routines.
///
/// Vertex and edge indices are zero-based.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),

    #[error("curves have different vertex counts ({0} vs {1})")]
    SizeMismatch(usize, usize),

    #[error("non-finite vertex coordinate at vertex {0}")]
    NonFinite(usize),

    #[error("degenerate edge {0}")]
    DegenerateEdge(usize),

    #[error("angle overflow at vertex {0}")]
    AngleOverflow(usize),

    #[error("cusp at vertex {0}")]
    Cusp(usize),

    #[error("curve is oriented clockwise (signed area {0})")]
    Clockwise(f64),

    #[error("singular telescoping coefficient at vertex {0}")]
    SingularTelescoping(usize),

    #[error("MFS ill-conditioned (condition estimate {0:e})")]
    MfsIllConditioned(f64),

    #[error("invalid placement: singular point {0} lies inside the domain")]
    InvalidPlacement(usize),

    #[error("evaluation at singular point {0}")]
    SingularEvaluation(usize),

    #[error("singular linear system")]
    SingularMatrix,

    #[error("step rejected after {iterations} iterations (residual {residual:e})")]
    StepRejected { iterations: usize, residual: f64 },

    #[error("explicit blow-up: {0}")]
    ExplicitBlowUp(String),

    #[error("tableau is not canonical")]
    NotCanonical,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("redistribution did not converge after {steps} steps (uniformity {uniformity:e})")]
    RedistributionStalled { steps: usize, uniformity: f64 },
}

pub type Result<T> = std::result::Result<T, FlowError>;
