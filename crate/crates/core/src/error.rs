use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Domain, grid, schedule or channel constructed with invalid parameters.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Two grid functions (or a function and a density) live on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A point outside the box domain.
    #[error("point {point:?} lies outside the domain")]
    OutOfDomain { point: Vec<f64> },

    /// The requested ball contains no cell center.
    #[error("ball of radius {radius} around {center:?} contains no cell center (cell diameter {cell_diameter})")]
    Resolution {
        center: Vec<f64>,
        radius: f64,
        cell_diameter: f64,
    },

    /// Root bracketing or convergence failure in an implicit mirror map.
    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: &'static str, detail: String },

    /// A value that must be finite/non-negative/normalized is not.
    #[error("invalid value: {0}")]
    InvalidValue(String),

    /// Importance weight with zero strategy density at the played action.
    #[error("strategy density at the played action is {density}; importance weight undefined")]
    ZeroDensity { density: f64 },

    /// Slope fit with too few usable checkpoints.
    #[error("slope fit needs at least 4 positive checkpoints spanning 1.5 decades, got {usable} spanning {decades:.2}")]
    InsufficientCheckpoints { usable: usize, decades: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
