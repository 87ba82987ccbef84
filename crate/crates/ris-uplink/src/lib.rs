//! Uplink transmit-power minimization for multiuser systems assisted by
//! reconfigurable intelligent surfaces (RIS).
//!
//! Each of `N` single-antenna users reaches an `M`-antenna base station
//! through its own `K`-element surface, and every user must meet an SINR
//! target at minimum transmit power. The solver alternates two stages:
//!
//! 1. [`power_filter`] — with surface phases frozen, jointly iterate MMSE
//!    receive filters and transmit powers to the fixed point that meets all
//!    SINR targets (or detect that no power vector can).
//! 2. [`phase_opt`] — with filters and powers frozen, compute for each user
//!    the norm-bounded spatial signature its filter would most like to see,
//!    then adjust that user's surface phases so the realizable signature
//!    tracks it (successive convex approximation on the phase vector).
//!
//! [`scenario`] builds network geometry and channels, [`system`] holds the
//! shared solver state and SINR accounting, [`numerics`] supplies the dense
//! complex linear algebra, and [`driver`] wires everything into runnable
//! experiments behind a small CLI.

pub mod driver;
pub mod numerics;
pub mod phase_opt;
pub mod power_filter;
pub mod scenario;
pub mod system;

pub(crate) mod rand_util;

use thiserror::Error;

/// Unified error type for every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Operands have incompatible shapes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A matrix that must be Hermitian is not, beyond tolerance.
    #[error("matrix is not Hermitian (max asymmetry {max_asymmetry:.3e})")]
    NotHermitian {
        /// Largest entrywise deviation between the matrix and its conjugate
        /// transpose.
        max_asymmetry: f64,
    },

    /// A Cholesky pivot failed: the matrix is not positive definite.
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite {
        /// Value of the failing pivot.
        pivot: f64,
        /// Row index of the failing pivot.
        index: usize,
    },

    /// An operation that needs at least one element got an empty matrix.
    #[error("matrix has zero rows or columns")]
    EmptyMatrix,

    /// A user or surface index is outside the scenario.
    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        /// Offending index.
        index: usize,
        /// What was being indexed.
        what: &'static str,
        /// Length of the indexed collection.
        len: usize,
    },

    /// Node placement makes a channel undefined (coincident positions).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A receive filter is identically zero, so SINR is undefined.
    #[error("receive filter for user {user} is zero")]
    ZeroFilter {
        /// User whose filter vanished.
        user: usize,
    },

    /// A receive filter is (numerically) orthogonal to its own signature,
    /// so the power update would divide by zero.
    #[error("filter for user {user} is orthogonal to its signature (|c^H s| = {gain:.3e})")]
    OrthogonalFilter {
        /// User whose filter lost its signal component.
        user: usize,
        /// Magnitude of the vanishing inner product.
        gain: f64,
    },

    /// A linear system that should be solvable is singular at working
    /// precision.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// The norm-constraint bisection could not bracket or meet tolerance.
    #[error("bisection failure: {0}")]
    BisectionFailure(String),

    /// The SINR targets admit no finite power vector: a power grew past
    /// the divergence cap during stage-1 iteration. Carries the trace of
    /// the outer iterations completed before the blow-up.
    #[error("SINR targets are infeasible (power diverged at outer iteration {iter})")]
    Infeasible {
        /// Outer iteration at which divergence was detected.
        iter: usize,
        /// Rows recorded before the diverging iteration.
        trace: driver::ConvergenceTrace,
    },

    /// A configuration file or CLI argument is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem failure while reading config or writing results.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
