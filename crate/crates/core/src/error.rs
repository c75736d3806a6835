use thiserror::Error;

/// Errors raised by the geometry, operator, simulation, estimation, PDE and
/// verification layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {point:?} lies outside the domain (tolerance {tol})")]
    PointOutsideDomain { point: Vec<f64>, tol: f64 },

    #[error("point is not on face {face}")]
    NotOnFace { face: usize },

    #[error("face index {face} is not valid for this domain")]
    InvalidFace { face: usize },

    #[error("weighted density diverges at a boundary point (face {face}, weight {weight})")]
    BoundaryEvaluation { face: usize, weight: f64 },

    #[error("second derivatives unavailable and finite-difference fallback disabled")]
    DerivativeUnavailable,

    #[error("operator is not clean on face {face}: weight takes values in [{min}, {max}]")]
    NotClean {
        face: usize,
        min: f64,
        max: f64,
        witnesses: Vec<Vec<f64>>,
    },

    #[error("face {face} is not tangent")]
    FaceNotTangent { face: usize },

    #[error("operator has no transverse faces")]
    NoTransverseFaces,

    #[error("diffusion matrix is indefinite (pivot {pivot:.3e})")]
    FactorizationFailure { pivot: f64 },

    #[error("non-finite state encountered at time {time}")]
    NonFinite { time: f64 },

    #[error("simulation needs {needed} steps, above the guard of {max_steps}")]
    MaxStepsExceeded { needed: u64, max_steps: u64 },

    #[error("empty window at radius {r}")]
    EmptyBin { r: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("grid too coarse near face {face}: {interior_nodes} nodes within the resolution window")]
    GridTooCoarse { face: usize, interior_nodes: usize },

    #[error("boundary data is incompatible with zero initial data: zeta(0) = {value}")]
    IncompatibleData { value: f64 },

    #[error("no barrier height H found down to {floor}")]
    NoValidH { floor: f64 },

    #[error("no barrier parameters found: {0}")]
    NoValidParams(String),

    #[error("no barrier radius found down to {floor}")]
    NoValidRho { floor: f64 },

    #[error("steady-state iteration did not converge (residual {residual:.3e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown preset: {0}")]
    UnknownPreset(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
