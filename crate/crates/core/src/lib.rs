//! Quadratic stochastic operators on the finite simplex: validation,
//! associated non-homogeneous Markov chains, uniform metrics, mixing
//! diagnostics and canonical constructions.

pub mod census;
pub mod chain;
pub mod constructions;
pub mod error;
pub mod io;
pub mod metrics;
pub mod mixing;
pub mod qso;
pub mod simplex;

/// Numerical tolerances shared across the crate.
pub mod tol {
    /// Admissible deviation of a sum from 1 before renormalization.
    pub const CONSTRUCTION: f64 = 1e-9;
    /// Below this an l1 norm is treated as zero.
    pub const IDENTITY: f64 = 1e-12;
    /// Negative entries down to `-CLAMP` are clamped to 0.
    pub const CLAMP: f64 = 1e-12;
}

pub use chain::{transition_matrix, window, ChainStepper, ChainWindow, StochasticMatrix};
pub use constructions::Partition;
pub use error::{QsoError, Result};
pub use metrics::{du_bounds, hat_du_exact, MetricReport};
pub use mixing::{classify_quasi_mixing, MixingReport, Verdict};
pub use qso::Qso;
pub use simplex::{Density, SignedVector};
