//! Floating-point abstraction shared by the game kernel and the LP engine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar used by [`crate::game`] tables and [`crate::lp`] models.
///
/// Tolerances scale with the precision of the type so the same simplex code
/// runs in `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Primal feasibility tolerance of the simplex ratio test.
    fn primal_tol() -> Self;
    /// Reduced-cost tolerance for optimality.
    fn dual_tol() -> Self;
    /// Smallest pivot magnitude accepted.
    fn pivot_tol() -> Self;
    /// Residual above which a solve is reported as a numerical failure.
    fn residual_tol() -> Self;
    /// Margin slack used when deciding strict equilibrium conditions.
    fn margin_tol() -> Self;

    /// Converts an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Widens to `f64` for reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn primal_tol() -> Self {
        1e-9
    }
    fn dual_tol() -> Self {
        1e-9
    }
    fn pivot_tol() -> Self {
        1e-11
    }
    fn residual_tol() -> Self {
        1e-7
    }
    fn margin_tol() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    fn primal_tol() -> Self {
        1e-5
    }
    fn dual_tol() -> Self {
        1e-5
    }
    fn pivot_tol() -> Self {
        1e-6
    }
    fn residual_tol() -> Self {
        1e-3
    }
    fn margin_tol() -> Self {
        1e-5
    }
}
