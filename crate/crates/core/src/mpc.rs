//! Condensed linear MPC for the double integrator.
//!
//! Over a horizon of `p` steps the stacked outputs are `y = S_x x_k + S_u U`,
//! and the tracker solves
//!
//! ```text
//!   min  U' Wu U + (y - y_ref)' Wy (y - y_ref) + rho eps^2
//!   s.t. softened bounds on U and y, eps >= 0
//! ```
//!
//! The Hessian and the constraint matrix do not depend on the state, so the
//! Cholesky factor is computed once per tracker.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::convex::{ConvexError, FactoredQp, SolveStatus, Tolerances};
use crate::dynamics::{DoubleIntegrator, State6, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("invalid MPC setup: {0}")]
    Invalid(String),
    #[error(transparent)]
    Convex(#[from] ConvexError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionModel {
    pub s_x: DMatrix<f64>,
    pub s_u: DMatrix<f64>,
    pub horizon: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
}

impl PredictionModel {
    /// Stacked outputs for initial state `x` and input sequence `u`.
    pub fn predict(&self, x: &State6, u: &DVector<f64>) -> DVector<f64> {
        let x = DVector::from_column_slice(x.as_slice());
        &self.s_x * x + &self.s_u * u
    }

    /// Rows of `S_u` giving the predicted position at step `k` (1-based).
    pub fn position_rows(&self, k: usize) -> DMatrix<f64> {
        self.s_u.rows((k - 1) * self.n_x, 3).into_owned()
    }

    pub fn free_response(&self, x: &State6) -> DVector<f64> {
        &self.s_x * DVector::from_column_slice(x.as_slice())
    }
}

pub fn build_prediction(model: &DoubleIntegrator, p: usize) -> Result<PredictionModel, MpcError> {
    if p == 0 {
        return Err(MpcError::Invalid("horizon must be at least 1".into()));
    }
    let a = DMatrix::from_column_slice(6, 6, model.a_d.as_slice());
    let b = DMatrix::from_column_slice(6, 3, model.b_d.as_slice());
    let (nx, nu) = (6, 3);
    let mut powers = Vec::with_capacity(p + 1);
    powers.push(DMatrix::identity(nx, nx));
    for k in 1..=p {
        let next = &a * &powers[k - 1];
        powers.push(next);
    }
    let mut s_x = DMatrix::zeros(nx * p, nx);
    let mut s_u = DMatrix::zeros(nx * p, nu * p);
    for k in 1..=p {
        s_x.view_mut(((k - 1) * nx, 0), (nx, nx)).copy_from(&powers[k]);
        for j in 1..=k {
            let blk = &powers[k - j] * &b;
            s_u.view_mut(((k - 1) * nx, (j - 1) * nu), (nx, nu)).copy_from(&blk);
        }
    }
    Ok(PredictionModel {
        s_x,
        s_u,
        horizon: p,
        n_x: nx,
        n_u: nu,
        a_d: a,
        b_d: b,
    })
}

/// Softness coefficients on the slack for each constraint family; zero
/// makes the family hard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Softness {
    pub u_min: f64,
    pub u_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Softness {
    fn default() -> Self {
        Self {
            u_min: 0.0,
            u_max: 0.0,
            y_min: 1.0,
            y_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcWeights {
    /// Per-step output weight, 6x6.
    pub w_y: DMatrix<f64>,
    /// Per-step input weight, 3x3.
    pub w_u: DMatrix<f64>,
    pub rho: f64,
    pub softness: Softness,
    /// Per-axis input bounds `(min, max)`.
    pub u_bounds: Option<(Vec3, Vec3)>,
    /// Output bounds `(min, max)` applied at every step.
    pub y_bounds: Option<(State6, State6)>,
}

impl MpcWeights {
    pub fn diagonal(w_pos: f64, w_vel: f64, w_u: f64, rho: f64) -> Self {
        let mut w_y = DMatrix::zeros(6, 6);
        for i in 0..3 {
            w_y[(i, i)] = w_pos;
            w_y[(i + 3, i + 3)] = w_vel;
        }
        Self {
            w_y,
            w_u: DMatrix::identity(3, 3) * w_u,
            rho,
            softness: Softness::default(),
            u_bounds: None,
            y_bounds: None,
        }
    }

    pub fn with_u_box(mut self, u_max: f64) -> Self {
        self.u_bounds = Some((Vec3::repeat(-u_max), Vec3::repeat(u_max)));
        self
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        if !(self.rho > 0.0) {
            return Err(MpcError::Invalid(format!("slack weight must be positive, got {}", self.rho)));
        }
        if self.w_y.shape() != (6, 6) || self.w_u.shape() != (3, 3) {
            return Err(MpcError::Invalid("weights must be 6x6 (outputs) and 3x3 (inputs)".into()));
        }
        for (name, w) in [("W_y", &self.w_y), ("W_u", &self.w_u)] {
            let sym = (w - w.transpose()).amax();
            let min_eig = w.clone().symmetric_eigen().eigenvalues.min();
            if sym > 1e-12 || min_eig < -1e-12 {
                return Err(MpcError::Invalid(format!("{name} must be symmetric PSD")));
            }
        }
        if let Some((lo, hi)) = &self.u_bounds {
            if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
                return Err(MpcError::Invalid("u bounds out of order".into()));
            }
        }
        if let Some((lo, hi)) = &self.y_bounds {
            if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
                return Err(MpcError::Invalid("y bounds out of order".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub u_sequence: DVector<f64>,
    pub epsilon: f64,
    /// Cost at the solution, constant term included.
    pub objective: f64,
    /// True when the solver failed and zero control was returned.
    pub fault: bool,
}

impl MpcSolution {
    pub fn first(&self) -> Vec3 {
        Vec3::new(self.u_sequence[0], self.u_sequence[1], self.u_sequence[2])
    }
}

/// Tracker with the horizon Hessian factored once.
#[derive(Debug, Clone)]
pub struct MpcTracker {
    pm: PredictionModel,
    weights: MpcWeights,
    wy_bar: DMatrix<f64>,
    factored: FactoredQp,
    ineq: DMatrix<f64>,
    tol: Tolerances,
}

fn block_diag(block: &DMatrix<f64>, times: usize) -> DMatrix<f64> {
    let n = block.nrows();
    let mut out = DMatrix::zeros(n * times, n * times);
    for k in 0..times {
        out.view_mut((k * n, k * n), (n, n)).copy_from(block);
    }
    out
}

impl MpcTracker {
    pub fn new(pm: PredictionModel, weights: MpcWeights) -> Result<Self, MpcError> {
        weights.validate()?;
        let p = pm.horizon;
        let nv = pm.n_u * p;
        let wy_bar = block_diag(&weights.w_y, p);
        let wu_bar = block_diag(&weights.w_u, p);
        let mut h = DMatrix::zeros(nv + 1, nv + 1);
        let huu = (wu_bar + pm.s_u.transpose() * &wy_bar * &pm.s_u) * 2.0;
        h.view_mut((0, 0), (nv, nv)).copy_from(&huu);
        h[(nv, nv)] = 2.0 * weights.rho;
        // Symmetrize away rounding from the triple product.
        let h = (&h + h.transpose()) * 0.5;
        let factored = FactoredQp::new(h)?;
        let ineq = Self::constraint_matrix(&pm, &weights);
        Ok(Self {
            pm,
            weights,
            wy_bar,
            factored,
            ineq,
            tol: Tolerances::default(),
        })
    }

    fn constraint_matrix(pm: &PredictionModel, w: &MpcWeights) -> DMatrix<f64> {
        let nv = pm.n_u * pm.horizon;
        let ny = pm.n_x * pm.horizon;
        let mut rows = 1;
        if w.u_bounds.is_some() {
            rows += 2 * nv;
        }
        if w.y_bounds.is_some() {
            rows += 2 * ny;
        }
        let mut a = DMatrix::zeros(rows, nv + 1);
        let mut r = 0;
        if w.u_bounds.is_some() {
            for i in 0..nv {
                a[(r + i, i)] = 1.0;
                a[(r + i, nv)] = -w.softness.u_max;
                a[(r + nv + i, i)] = -1.0;
                a[(r + nv + i, nv)] = -w.softness.u_min;
            }
            r += 2 * nv;
        }
        if w.y_bounds.is_some() {
            a.view_mut((r, 0), (ny, nv)).copy_from(&pm.s_u);
            a.view_mut((r + ny, 0), (ny, nv)).copy_from(&(-&pm.s_u));
            for i in 0..ny {
                a[(r + i, nv)] = -w.softness.y_max;
                a[(r + ny + i, nv)] = -w.softness.y_min;
            }
            r += 2 * ny;
        }
        a[(r, nv)] = -1.0;
        a
    }

    fn constraint_vector(&self, free: &DVector<f64>) -> DVector<f64> {
        let p = self.pm.horizon;
        let nv = self.pm.n_u * p;
        let ny = self.pm.n_x * p;
        let mut b = DVector::zeros(self.ineq.nrows());
        let mut r = 0;
        if let Some((lo, hi)) = &self.weights.u_bounds {
            for i in 0..nv {
                b[r + i] = hi[i % 3];
                b[r + nv + i] = -lo[i % 3];
            }
            r += 2 * nv;
        }
        if let Some((lo, hi)) = &self.weights.y_bounds {
            for i in 0..ny {
                b[r + i] = hi[i % 6] - free[i];
                b[r + ny + i] = -lo[i % 6] + free[i];
            }
            r += 2 * ny;
        }
        b[r] = 0.0;
        b
    }

    pub fn prediction(&self) -> &PredictionModel {
        &self.pm
    }

    pub fn weights(&self) -> &MpcWeights {
        &self.weights
    }

    /// The factored Hessian over `(U, eps)`.
    pub fn factored(&self) -> &FactoredQp {
        &self.factored
    }

    /// Linear cost term over `(U, eps)` for state `x` and reference window.
    pub fn linear_term(&self, x: &State6, y_ref: &DVector<f64>) -> DVector<f64> {
        let nv = self.pm.n_u * self.pm.horizon;
        let err = self.pm.free_response(x) - y_ref;
        let cu = self.pm.s_u.transpose() * (&self.wy_bar * err) * 2.0;
        let mut c = DVector::zeros(nv + 1);
        c.rows_mut(0, nv).copy_from(&cu);
        c
    }

    /// Full tracking cost of `(U, eps)` including the constant term.
    pub fn cost(&self, x: &State6, y_ref: &DVector<f64>, u: &DVector<f64>, eps: f64) -> f64 {
        let e = self.pm.predict(x, u) - y_ref;
        let wu = block_diag(&self.weights.w_u, self.pm.horizon);
        u.dot(&(&wu * u)) + e.dot(&(&self.wy_bar * &e)) + self.weights.rho * eps * eps
    }

    pub fn solve(&self, x: &State6, y_ref: &DVector<f64>) -> Result<MpcSolution, MpcError> {
        let ny = self.pm.n_x * self.pm.horizon;
        if y_ref.len() != ny {
            return Err(MpcError::Invalid(format!(
                "reference window has {} entries, expected {ny}",
                y_ref.len()
            )));
        }
        let nv = self.pm.n_u * self.pm.horizon;
        let c = self.linear_term(x, y_ref);
        let b = self.constraint_vector(&self.pm.free_response(x));
        let empty = DMatrix::zeros(0, nv + 1);
        let r = self.factored.solve(&c, &self.ineq, &b, &empty, &DVector::zeros(0), &self.tol);
        if r.status != SolveStatus::Optimal {
            log::warn!("tracking QP returned {:?}; commanding zero thrust", r.status);
            return Ok(MpcSolution {
                u_sequence: DVector::zeros(nv),
                epsilon: 0.0,
                objective: f64::NAN,
                fault: true,
            });
        }
        let u = r.primal.rows(0, nv).into_owned();
        let eps = r.primal[nv];
        let objective = self.cost(x, y_ref, &u, eps);
        Ok(MpcSolution {
            u_sequence: u,
            epsilon: eps,
            objective,
            fault: false,
        })
    }
}

/// One-shot tracking solve; build an [`MpcTracker`] to reuse the factor.
pub fn solve_tracking(x_k: &State6, y_ref: &DVector<f64>, pm: &PredictionModel, w: &MpcWeights) -> Result<MpcSolution, MpcError> {
    MpcTracker::new(pm.clone(), w.clone())?.solve(x_k, y_ref)
}

/// Reference window holding `y` constant over the horizon.
pub fn constant_reference(y: &State6, p: usize) -> DVector<f64> {
    DVector::from_fn(6 * p, |i, _| y[i % 6])
}
