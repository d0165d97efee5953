use thiserror::Error;

use crate::flow::Point;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid flow specification: {0}")]
    InvalidFlow(String),

    #[error("trajectory integration failed for point ({x}, {y})", x = .point.x, y = .point.y)]
    Integration { point: Point },

    #[error("trajectory integration failed in box {box_id}: {source}")]
    BoxIntegration {
        box_id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid diffusion radius {0}")]
    InvalidDiffusion(f64),

    #[error("stencil of {0} points does not fit the ring layout (1, 7, 19, 37, 61, ...)")]
    InvalidStencil(usize),

    #[error("test point count must be positive")]
    NoTestPoints,

    #[error("row {row} of the transition matrix lost all of its samples")]
    EmptyRow { row: usize },

    #[error("column {col} has nonzero entries but zero target weight")]
    ZeroColumnWeight { col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("requested {k} singular triples but the smallest dimension is {min_dim}")]
    TooManyTriples { k: usize, min_dim: usize },

    #[error("singular value solver did not converge in {iterations} iterations (best residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid solver setting: {0}")]
    InvalidSolver(String),

    #[error("zero weight on entry {index} with nonzero vector value")]
    ZeroWeight { index: usize },

    #[error("function is constant; no nontrivial partition exists")]
    ConstantFunction,

    #[error("second singular value is not simple (gap {gap:e}); partition is ill-posed")]
    DegenerateSingularValue { gap: f64 },

    #[error("partition cell {0} is empty")]
    EmptyCell(usize),

    #[error("function takes only one sign")]
    SingleSigned,

    #[error("transformed domain is not covered by the configured grid: {0}")]
    NotCovered(String),

    #[error("invalid study: {0}")]
    InvalidStudy(String),

    #[error("at diffusion radius {epsilon}: {source}")]
    AtEpsilon {
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },
}
