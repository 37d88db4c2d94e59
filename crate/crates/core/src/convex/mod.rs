//! Dense small-scale convex solvers.
//!
//! Everything downstream (tracking MPC, safety filters, collision scaling,
//! the trajectory planner) reduces to one of two problem shapes:
//!
//! ```text
//!     QP:  minimize  1/2 x' H x + c' x    s.t.  A x <= b,  E x = d
//!     LP:  minimize  c' x                 s.t.  A x <= b
//! ```
//!
//! Both solvers return the multipliers of the inequality rows, because the
//! collision-scaling gradients are read straight off the LP duals.

mod lp;
mod qp;

pub use lp::{solve_lp, solve_lp_with, LinearProgram};
pub use qp::{solve_qp, solve_qp_with, FactoredQp, QuadraticProgram};

use nalgebra::DVector;
use thiserror::Error;

/// Solver tolerances, kept in one record so tests can tighten them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Allowed violation of `A x <= b` (and `E x = d`).
    pub feasibility: f64,
    /// Allowed norm of the Lagrangian gradient.
    pub stationarity: f64,
    /// Most negative multiplier still accepted as nonnegative.
    pub dual_sign: f64,
    /// Allowed `|lambda_i * slack_i|`.
    pub complementarity: f64,
    /// Allowed asymmetry of the cost matrix.
    pub symmetry: f64,
    /// Iteration cap is `iteration_factor * (m + n)`.
    pub iteration_factor: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-8,
            stationarity: 1e-8,
            dual_sign: 1e-10,
            complementarity: 1e-8,
            symmetry: 1e-12,
            iteration_factor: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Only produced by the LP solver.
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub primal: DVector<f64>,
    /// Multipliers of the inequality rows, one per row, nonnegative.
    pub duals: DVector<f64>,
    /// Multipliers of the equality rows (sign-free).
    pub eq_duals: DVector<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: usize,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    fn failed(n: usize, m: usize, meq: usize, status: SolveStatus, iterations: usize) -> Self {
        Self {
            primal: DVector::zeros(n),
            duals: DVector::zeros(m),
            eq_duals: DVector::zeros(meq),
            status,
            objective: f64::NAN,
            iterations,
        }
    }
}

/// Worst-case KKT residuals of a candidate primal/dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub primal: f64,
    pub stationarity: f64,
    pub dual_sign: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.stationarity).max(self.dual_sign).max(self.complementarity)
    }

    /// True when every residual is below its tolerance scaled by `1 + scale`.
    pub fn within(&self, tol: &Tolerances, scale: f64) -> bool {
        let k = 1.0 + scale;
        self.primal <= tol.feasibility * k
            && self.stationarity <= tol.stationarity * k
            && self.dual_sign <= tol.dual_sign.max(tol.stationarity) * k
            && self.complementarity <= tol.complementarity * k
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvexError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cost matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("cost matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("problem data contains non-finite values")]
    NonFinite,
}
