use thiserror::Error;

/// Errors raised by precoder construction and the experiment harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid modulation order {0}: must be a power of two, at least 2")]
    InvalidOrder(u32),

    #[error("symbol index {index} out of range for {order}-PSK")]
    IndexOutOfRange { index: usize, order: u32 },

    #[error("symbols mix modulation orders {0} and {1}")]
    MixedOrders(u32, u32),

    #[error("zero vector has no defined direction ({0})")]
    ZeroVector(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Smallest-to-largest singular value ratio fell below the rank tolerance.
    #[error("degenerate channel: singular value ratio {ratio:.3e} below tolerance {tolerance:.0e}")]
    DegenerateChannel { ratio: f64, tolerance: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The covariance solver hit its iteration cap. `best_power` is the trace of
    /// the best feasible iterate seen.
    #[error("solver did not converge after {iterations} iterations (best feasible power {best_power:.6e}, gap {gap:.3e})")]
    NonConvergence {
        iterations: usize,
        best_power: f64,
        gap: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
