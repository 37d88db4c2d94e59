//! Collision detection between convex polytopes by minimum uniform scaling,
//! its gradient with respect to a body center, and the avoidance re-solve
//! that corrects an MPC input sequence.
//!
//! Both bodies are scaled about their own centers. With `n_f` the world-frame
//! face normals the scaling LP is
//!
//! ```text
//!   min alpha  s.t.  n_f'(x - r_i) <= alpha b_f  for every face of both bodies,  alpha >= 0
//! ```
//!
//! and `s = alpha`. The bodies are disjoint exactly when `s > 1`.

use nalgebra::{DMatrix, DVector, UnitQuaternion};
use thiserror::Error;

use crate::convex::{solve_lp, ConvexError, FactoredQp, LinearProgram, SolveStatus, Tolerances};
use crate::dynamics::{position, RsoState, State6, Vec3};
use crate::mpc::{MpcTracker, PredictionModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DcolError {
    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),
    #[error("scaling LP ended with status {0:?}")]
    Solver(SolveStatus),
    #[error(transparent)]
    Convex(#[from] ConvexError),
}

/// `{x : A R'(x - r) <= b}` with unit face normals in the body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    normals: Vec<Vec3>,
    offsets: Vec<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub center: Vec3,
}

impl Polytope {
    /// Faces given as body-frame normal/offset pairs. Normals are rescaled to
    /// unit length together with their offsets.
    pub fn new(normals: Vec<Vec3>, offsets: Vec<f64>) -> Result<Self, DcolError> {
        if normals.len() != offsets.len() {
            return Err(DcolError::InvalidPolytope(format!(
                "{} normals but {} offsets",
                normals.len(),
                offsets.len()
            )));
        }
        if normals.len() < 4 {
            return Err(DcolError::InvalidPolytope("a bounded 3D polytope needs at least 4 faces".into()));
        }
        let mut n_out = Vec::with_capacity(normals.len());
        let mut b_out = Vec::with_capacity(normals.len());
        for (n, b) in normals.iter().zip(&offsets) {
            let len = n.norm();
            if !(len > 0.0) || !len.is_finite() {
                return Err(DcolError::InvalidPolytope("zero or non-finite face normal".into()));
            }
            let b = b / len;
            if !(b > 0.0) {
                return Err(DcolError::InvalidPolytope(
                    "origin must lie strictly inside (all offsets > 0)".into(),
                ));
            }
            n_out.push(n / len);
            b_out.push(b);
        }
        Ok(Self {
            normals: n_out,
            offsets: b_out,
            rotation: UnitQuaternion::identity(),
            center: Vec3::zeros(),
        })
    }

    /// Axis-aligned box with full side lengths `dims`.
    pub fn cuboid(dims: Vec3) -> Self {
        let h = dims * 0.5;
        let mut normals = Vec::with_capacity(6);
        let mut offsets = Vec::with_capacity(6);
        for ax in 0..3 {
            for sgn in [1.0, -1.0] {
                let mut n = Vec3::zeros();
                n[ax] = sgn;
                normals.push(n);
                offsets.push(h[ax]);
            }
        }
        Self {
            normals,
            offsets,
            rotation: UnitQuaternion::identity(),
            center: Vec3::zeros(),
        }
    }

    pub fn cube(side: f64) -> Self {
        Self::cuboid(Vec3::repeat(side))
    }

    pub fn with_pose(mut self, rotation: UnitQuaternion<f64>, center: Vec3) -> Self {
        self.rotation = rotation;
        self.center = center;
        self
    }

    pub fn at(&self, center: Vec3) -> Self {
        let mut p = self.clone();
        p.center = center;
        p
    }

    pub fn num_faces(&self) -> usize {
        self.normals.len()
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn world_normal(&self, f: usize) -> Vec3 {
        self.rotation * self.normals[f]
    }

    pub fn contains(&self, x: &Vec3, scale: f64) -> bool {
        let local = self.rotation.inverse_transform_vector(&(x - self.center));
        self.normals
            .iter()
            .zip(&self.offsets)
            .all(|(n, b)| n.dot(&local) <= scale * b + 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingResult {
    pub s: f64,
    pub contact_point: Vec3,
    /// Face multipliers, first body then second.
    pub duals: DVector<f64>,
    /// Derivative of `s` with respect to the first body's center.
    pub grad_s_center: Vec3,
    /// True when the gradient came from finite differences.
    pub degenerate: bool,
}

fn scaling_lp(p1: &Polytope, p2: &Polytope) -> LinearProgram {
    let m = p1.num_faces() + p2.num_faces();
    let mut a = DMatrix::zeros(m + 1, 4);
    let mut b = DVector::zeros(m + 1);
    let mut r = 0;
    for p in [p1, p2] {
        for f in 0..p.num_faces() {
            let n = p.world_normal(f);
            a[(r, 0)] = n.x;
            a[(r, 1)] = n.y;
            a[(r, 2)] = n.z;
            a[(r, 3)] = -p.offsets[f];
            b[r] = n.dot(&p.center);
            r += 1;
        }
    }
    a[(m, 3)] = -1.0;
    LinearProgram::new(DVector::from_row_slice(&[0.0, 0.0, 0.0, 1.0]), a, b)
}

fn scaling_value(p1: &Polytope, p2: &Polytope) -> Result<(f64, DVector<f64>, DVector<f64>, LinearProgram), DcolError> {
    let lp = scaling_lp(p1, p2);
    let r = solve_lp(&lp)?;
    if r.status != SolveStatus::Optimal {
        return Err(DcolError::Solver(r.status));
    }
    Ok((r.primal[3], r.primal, r.duals, lp))
}

/// Positive-dual rows must be linearly independent for the dual to be unique.
fn duals_degenerate(lp: &LinearProgram, duals: &DVector<f64>) -> bool {
    let active: Vec<usize> = (0..duals.len()).filter(|&i| duals[i] > 1e-9).collect();
    if active.is_empty() || active.len() > 4 {
        return true;
    }
    let rows = DMatrix::from_fn(active.len(), 4, |i, j| lp.ineq_matrix[(active[i], j)]);
    let sv = rows.singular_values();
    sv.min() <= 1e-9 * sv.max().max(1.0)
}

/// Minimum uniform scaling of both bodies at which they touch.
pub fn min_scaling(p1: &Polytope, p2: &Polytope) -> Result<ScalingResult, DcolError> {
    let (s, primal, duals, lp) = scaling_value(p1, p2)?;
    let mut res = ScalingResult {
        s,
        contact_point: Vec3::new(primal[0], primal[1], primal[2]),
        duals: duals.rows(0, duals.len() - 1).into_owned(),
        grad_s_center: Vec3::zeros(),
        degenerate: duals_degenerate(&lp, &duals),
    };
    res.grad_s_center = scaling_gradient(&res, p1, p2)?;
    Ok(res)
}

/// Central finite-difference step used when the active set is degenerate.
pub const FD_STEP: f64 = 1e-6;

/// `ds/dr1` from the face multipliers of the first body, or by central
/// differences when the active set is degenerate.
pub fn scaling_gradient(res: &ScalingResult, p1: &Polytope, p2: &Polytope) -> Result<Vec3, DcolError> {
    if !res.degenerate {
        let mut g = Vec3::zeros();
        for f in 0..p1.num_faces() {
            g -= p1.world_normal(f) * res.duals[f];
        }
        return Ok(g);
    }
    log::debug!("degenerate scaling active set at s = {}; using finite differences", res.s);
    let mut g = Vec3::zeros();
    for ax in 0..3 {
        let mut e = Vec3::zeros();
        e[ax] = FD_STEP;
        let up = scaling_value(&p1.at(p1.center + e), p2)?.0;
        let dn = scaling_value(&p1.at(p1.center - e), p2)?.0;
        g[ax] = (up - dn) / (2.0 * FD_STEP);
    }
    Ok(g)
}

/// A horizon step whose predicted scaling falls below the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedTick {
    /// 1-based horizon step.
    pub step: usize,
    pub s: f64,
    /// `ds/dr` of the agent center at that step.
    pub grad: Vec3,
}

/// Scaling along the predicted trajectory against one obstacle pose per
/// horizon step. Returns every step's `(s, grad)`.
pub fn scaling_profile(
    u_sequence: &DVector<f64>,
    x_k: &State6,
    pm: &PredictionModel,
    agent: &Polytope,
    obstacles: &[Polytope],
) -> Result<Vec<FlaggedTick>, DcolError> {
    let y = pm.predict(x_k, u_sequence);
    let mut out = Vec::with_capacity(pm.horizon);
    for (k, obs) in obstacles.iter().enumerate().take(pm.horizon) {
        let pos = Vec3::new(y[6 * k], y[6 * k + 1], y[6 * k + 2]);
        let r = min_scaling(&agent.at(pos), obs)?;
        out.push(FlaggedTick {
            step: k + 1,
            s: r.s,
            grad: r.grad_s_center,
        });
    }
    Ok(out)
}

/// Steps of the predicted trajectory whose scaling against the matching
/// obstacle is below `s_thr`.
pub fn detect_against(
    u_sequence: &DVector<f64>,
    x_k: &State6,
    pm: &PredictionModel,
    agent: &Polytope,
    obstacles: &[Polytope],
    s_thr: f64,
) -> Result<Vec<FlaggedTick>, DcolError> {
    Ok(scaling_profile(u_sequence, x_k, pm, agent, obstacles)?
        .into_iter()
        .filter(|f| f.s < s_thr)
        .collect())
}

/// Drops flagged steps whose gradient opposes the first flagged step's,
/// i.e. steps where the prediction has already passed through the obstacle.
pub fn approach_side(flagged: Vec<FlaggedTick>) -> Vec<FlaggedTick> {
    let Some(g0) = flagged.first().map(|f| f.grad) else {
        return flagged;
    };
    flagged.into_iter().filter(|f| f.grad.dot(&g0) > 0.0).collect()
}

/// Target hull at each horizon step, with its attitude propagated at constant
/// body rate from time `t0`.
pub fn rso_hull_over_horizon(rso: &RsoState, t0: f64, dt: f64, p: usize) -> Vec<Polytope> {
    (1..=p)
        .map(|k| rso.hull.clone().with_pose(rso.attitude_at(t0 + k as f64 * dt), Vec3::zeros()))
        .collect()
}

pub fn detect_over_horizon(
    u_sequence: &DVector<f64>,
    x_k: &State6,
    pm: &PredictionModel,
    rso: &RsoState,
    t0: f64,
    dt: f64,
    agent: &Polytope,
    s_thr: f64,
) -> Result<Vec<FlaggedTick>, DcolError> {
    let hulls = rso_hull_over_horizon(rso, t0, dt, pm.horizon);
    detect_against(u_sequence, x_k, pm, agent, &hulls, s_thr)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolveOutcome {
    pub u_sequence: DVector<f64>,
    pub epsilon: f64,
    /// True when the QP failed and the input sequence was returned unchanged.
    pub fault: bool,
}

/// Re-solve the tracking problem over `v = u + du` and a slack, with a hard
/// per-axis box on `v` and one linearized row per flagged step:
///
/// ```text
///   g_k' P_k (v - u) + s_k + slack_coeff * eps >= s_thr
/// ```
///
/// where `P_k` are the position rows of `S_u` at step `k`.
pub fn resolve_avoidance(
    tracker: &MpcTracker,
    x_k: &State6,
    y_ref: &DVector<f64>,
    u_sequence: &DVector<f64>,
    flagged: &[FlaggedTick],
    s_thr: f64,
    u_max: f64,
    slack_coeff: f64,
) -> ResolveOutcome {
    if flagged.is_empty() {
        return ResolveOutcome {
            u_sequence: u_sequence.clone(),
            epsilon: 0.0,
            fault: false,
        };
    }
    let pm = tracker.prediction();
    let nv = pm.n_u * pm.horizon;
    let m = 2 * nv + flagged.len() + 1;
    let mut a = DMatrix::zeros(m, nv + 1);
    let mut b = DVector::zeros(m);
    for i in 0..nv {
        a[(i, i)] = 1.0;
        b[i] = u_max;
        a[(nv + i, i)] = -1.0;
        b[nv + i] = u_max;
    }
    for (j, f) in flagged.iter().enumerate() {
        let row = pm.position_rows(f.step).transpose() * f.grad;
        let r = 2 * nv + j;
        for i in 0..nv {
            a[(r, i)] = -row[i];
        }
        a[(r, nv)] = -slack_coeff;
        b[r] = f.s - s_thr - row.dot(u_sequence);
    }
    a[(m - 1, nv)] = -1.0;
    let c = tracker.linear_term(x_k, y_ref);
    let res = solve_resolve(tracker.factored(), &c, &a, &b);
    match res {
        Some((u, eps)) => ResolveOutcome {
            u_sequence: u,
            epsilon: eps,
            fault: false,
        },
        None => {
            log::warn!("avoidance re-solve failed; keeping the nominal sequence");
            ResolveOutcome {
                u_sequence: u_sequence.clone(),
                epsilon: 0.0,
                fault: true,
            }
        }
    }
}

fn solve_resolve(h: &FactoredQp, c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let n = c.len();
    let r = h.solve(c, a, b, &DMatrix::zeros(0, n), &DVector::zeros(0), &Tolerances::default());
    if r.status != SolveStatus::Optimal {
        return None;
    }
    Some((r.primal.rows(0, n - 1).into_owned(), r.primal[n - 1]))
}

/// Position of the agent at horizon step `k` under `u`.
pub fn predicted_position(pm: &PredictionModel, x_k: &State6, u: &DVector<f64>, k: usize) -> Vec3 {
    let y = pm.predict(x_k, u);
    let mut x = State6::zeros();
    x.copy_from_slice(&y.as_slice()[6 * (k - 1)..6 * k]);
    position(&x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn coincident_centers_scale_to_zero() {
        let a = Polytope::cube(1.0);
        let r = min_scaling(&a, &a.clone()).unwrap();
        assert!(r.s.abs() < 1e-12);
    }

    #[test]
    fn unit_cubes_two_apart() {
        let a = Polytope::cube(1.0);
        let b = Polytope::cube(1.0).at(Vec3::new(2.0, 0.0, 0.0));
        let r = min_scaling(&a, &b).unwrap();
        assert!((r.s - 2.0).abs() < 1e-12);
        assert!((r.contact_point.x - 1.0).abs() < 1e-12);
        assert!(!r.degenerate);
        // Moving the first cube toward the second lowers s: ds/dx = -1.
        assert!((r.grad_s_center - Vec3::new(-1.0, 0.0, 0.0)).amax() < 1e-12);
        assert!(r.grad_s_center.y.abs() < 1e-9 && r.grad_s_center.z.abs() < 1e-9);
    }

    #[test]
    fn rotated_box_corner_contact() {
        let a = Polytope::cube(1.0).with_pose(UnitQuaternion::from_axis_angle(&Vec3::z_axis(), FRAC_PI_4), Vec3::zeros());
        let b = Polytope::cube(1.0).at(Vec3::new(3.0, 0.0, 0.0));
        let r = min_scaling(&a, &b).unwrap();
        // Corner reach sqrt(2)/2 plus face 1/2, scaled, spans 3.
        let expect = 3.0 / (0.5 * 2f64.sqrt() + 0.5);
        assert!((r.s - expect).abs() < 1e-10);
    }

    #[test]
    fn invalid_polytopes_rejected() {
        assert!(Polytope::new(vec![Vec3::x(); 4], vec![1.0, 1.0, 1.0]).is_err());
        assert!(Polytope::new(vec![Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y()], vec![1.0, -1.0, 1.0, 1.0]).is_err());
        let p = Polytope::new(
            vec![Vec3::x() * 2.0, -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()],
            vec![2.0; 6],
        )
        .unwrap();
        assert_eq!(p.offsets()[0], 1.0);
    }

    #[test]
    fn no_flags_means_unchanged_sequence() {
        let m = crate::dynamics::discretize(0.5, 1.0).unwrap();
        let pm = crate::mpc::build_prediction(&m, 4).unwrap();
        let tr = MpcTracker::new(pm, crate::mpc::MpcWeights::diagonal(1.0, 1.0, 1.0, 10.0)).unwrap();
        let u = DVector::from_element(12, 0.003);
        let out = resolve_avoidance(&tr, &State6::zeros(), &DVector::zeros(24), &u, &[], 1.1, 0.025, 1.0);
        assert_eq!(out.u_sequence, u);
    }

    #[test]
    fn approach_side_drops_steps_past_the_obstacle() {
        let tick = |step, gx: f64| FlaggedTick {
            step,
            s: 1.0,
            grad: Vec3::new(gx, 0.2, 0.0),
        };
        let kept = approach_side(vec![tick(2, -1.0), tick(3, -0.5), tick(4, 0.8), tick(5, -0.1)]);
        assert_eq!(kept.iter().map(|f| f.step).collect::<Vec<_>>(), vec![2, 3, 5]);
        assert!(approach_side(Vec::new()).is_empty());
    }
}
