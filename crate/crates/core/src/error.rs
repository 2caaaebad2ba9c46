use thiserror::Error;

/// Errors raised by the solver and its diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field has {found} cells but the grid has {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The split step produced a density below the admissible round-off floor.
    #[error("positivity lost at t = {t}: min u = {min_u:e}")]
    PositivityLoss { t: f64, min_u: f64 },

    /// The step exceeded the advective positivity limit of the updated drift.
    #[error("dt = {dt:e} exceeds the advective limit {limit:e}")]
    CflExceeded { dt: f64, limit: f64 },

    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("density must be strictly positive (cell {cell}, value {value:e})")]
    NonPositiveDensity { cell: usize, value: f64 },

    #[error("bump of width {sigma} covers only {cells} cells (need at least 4)")]
    UnresolvedBump { sigma: f64, cells: usize },

    #[error("resolution exhausted: best sigma = {best_sigma:e}, best G = {best_g}")]
    ResolutionExhausted { best_sigma: f64, best_g: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("trajectories are not in lockstep: {0}")]
    LockstepMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
