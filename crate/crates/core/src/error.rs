use thiserror::Error;

use crate::grid::CellId;

pub type Result<T> = std::result::Result<T, SldgError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SldgError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Linear solver did not reach the requested tolerance.
    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDiverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("stationary field; supply dt explicitly")]
    StationaryField,

    #[error("degenerate upstream cell at ({}, {}): {reason}", cell.ix, cell.iy)]
    DegenerateUpstream { cell: CellId, reason: String },

    #[error("clip failure for upstream cell ({}, {}): {reason}", cell.ix, cell.iy)]
    ClipFailure { cell: CellId, reason: String },

    #[error("CFL underflow: cfl {cfl:.3e} fell below {floor:.3e} after repeated shrinks")]
    CflUnderflow { cfl: f64, floor: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl SldgError {
    /// Geometry failures the adaptive controller can recover from by shrinking the step.
    pub fn is_geometric(&self) -> bool {
        matches!(
            self,
            SldgError::DegenerateUpstream { .. } | SldgError::ClipFailure { .. }
        )
    }
}

impl From<std::io::Error> for SldgError {
    fn from(e: std::io::Error) -> Self {
        SldgError::Io(e.to_string())
    }
}
