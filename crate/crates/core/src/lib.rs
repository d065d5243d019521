//! Weighted sum-rate beamforming for large-scale MIMO downlinks.
//!
//! The crate reformulates the power-constrained weighted sum-rate problem as
//! an unconstrained, scale-invariant objective, applies the matrix
//! fractional-programming transforms to reach a per-user quadratic program,
//! and solves that program either exactly (dense `M x M` Cholesky) or with a
//! fixed number `T` of gradient steps whose step sizes are placed at the
//! Chebyshev nodes of the operator's spectral interval.
//!
//! Module map:
//!
//! * [`linalg`]: complex kernels, matrix-free Hermitian operators and
//!   spectral-interval estimation.
//! * [`network`]: system configuration, channel generation, rates and the
//!   scale-invariant objective.
//! * [`fp`]: auxiliary-variable updates, surrogate objectives and the
//!   quadratic-program operator.
//! * [`schedule`]: finite-horizon step-size schedules and minimax analysis.
//! * [`solvers`]: exact and finite-horizon outer loops with instrumentation.

pub mod error;
pub mod fp;
pub mod linalg;
pub mod network;
pub mod schedule;
pub mod solvers;

pub use error::{Error, Result};

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Dense complex matrix used throughout the crate (column-major).
pub type CMat = DMatrix<Complex64>;
