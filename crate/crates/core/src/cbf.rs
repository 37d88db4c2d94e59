//! Barrier functions and the point-wise safety filter.
//!
//! Three constraint families are provided:
//! * the pairwise braking-distance CBF for agents on a plane or in space,
//! * the ellipsoidal keep-out HOCBF, evaluated in the rotating target frame,
//! * the inter-agent sphere HOCBF.
//!
//! Every family becomes rows `lf + lg' u >= -alpha` over the stacked controls
//! of all agents, and [`safety_filter`] projects the desired controls onto
//! those rows and a per-axis box.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::convex::{solve_qp, QuadraticProgram, SolveStatus};
use crate::dynamics::{RsoState, State6, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CbfError {
    #[error("invalid barrier parameters: {0}")]
    Invalid(String),
    #[error("control does not enter the last chain derivative")]
    DegenerateRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KappaKind {
    #[default]
    Linear,
    Cubic,
}

/// Extended class-K function `gamma h` or `gamma h^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassKappa {
    pub kind: KappaKind,
    pub gain: f64,
}

impl ClassKappa {
    pub fn linear(gain: f64) -> Self {
        Self {
            kind: KappaKind::Linear,
            gain,
        }
    }

    pub fn cubic(gain: f64) -> Self {
        Self {
            kind: KappaKind::Cubic,
            gain,
        }
    }

    pub fn validate(&self) -> Result<(), CbfError> {
        if !(self.gain > 0.0) || !self.gain.is_finite() {
            return Err(CbfError::Invalid(format!("class-K gain must be positive, got {}", self.gain)));
        }
        Ok(())
    }

    pub fn eval(&self, h: f64) -> f64 {
        match self.kind {
            KappaKind::Linear => self.gain * h,
            KappaKind::Cubic => self.gain * h * h * h,
        }
    }

    pub fn derivative(&self, h: f64) -> f64 {
        match self.kind {
            KappaKind::Linear => self.gain,
            KappaKind::Cubic => 3.0 * self.gain * h * h,
        }
    }
}

impl Default for ClassKappa {
    fn default() -> Self {
        Self::linear(1.0)
    }
}

/// Safe-set function with first and second derivatives.
pub trait Barrier {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// `x_dot = f(x) + g(x) u`.
pub trait ControlAffine {
    fn drift(&self, x: &DVector<f64>) -> DVector<f64>;
    fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Cascade `psi_0 = h`, `psi_k = psi_{k-1}' + alpha_k(psi_{k-1})` up to the
/// final control-affine row `lf + lg' u >= -alpha_r(psi_{r-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiChain {
    pub order: usize,
    /// `psi_0 .. psi_{r-1}`.
    pub psi: Vec<f64>,
    /// `L_f psi_{r-1}`.
    pub lf: f64,
    /// `L_g psi_{r-1}`.
    pub lg: DVector<f64>,
    /// `alpha_r(psi_{r-1})`.
    pub alpha: f64,
    /// Gradient of `psi_{r-1}` in the state.
    pub grad_last: DVector<f64>,
}

impl PsiChain {
    /// Value of `psi_r` for control `u`.
    pub fn psi_r(&self, u: &DVector<f64>) -> f64 {
        self.lf + self.lg.dot(u) + self.alpha
    }
}

/// Builds the chain for relative degree 1 or 2. For `r = 2` the barrier is
/// assumed not to see the control through its first derivative.
pub fn build_psi_chain(
    h: &dyn Barrier,
    alphas: &[ClassKappa],
    dynamics: &dyn ControlAffine,
    x: &DVector<f64>,
) -> Result<PsiChain, CbfError> {
    let r = alphas.len();
    if !(1..=2).contains(&r) {
        return Err(CbfError::Invalid(format!("chain order must be 1 or 2, got {r}")));
    }
    for a in alphas {
        a.validate()?;
    }
    let f = dynamics.drift(x);
    let g = dynamics.input_matrix(x);
    let h0 = h.value(x);
    let dh = h.gradient(x);
    let (psi, grad_last) = if r == 1 {
        (vec![h0], dh)
    } else {
        let psi1 = dh.dot(&f) + alphas[0].eval(h0);
        let grad = h.hessian(x) * &f + dynamics.drift_jacobian(x).transpose() * &dh + &dh * alphas[0].derivative(h0);
        (vec![h0, psi1], grad)
    };
    let lf = grad_last.dot(&f);
    let lg = g.transpose() * &grad_last;
    if lg.amax() <= 1e-14 * (1.0 + grad_last.amax()) {
        log::warn!("control-free HOCBF row dropped");
        return Err(CbfError::DegenerateRow);
    }
    let last = *psi.last().unwrap();
    Ok(PsiChain {
        order: r,
        psi,
        lf,
        lg,
        alpha: alphas[r - 1].eval(last),
        grad_last,
    })
}

// ----------------------------------------------------------------------------
// Pairwise braking-distance CBF.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseBrakingCbf {
    /// Minimum center distance, m.
    pub d_s: f64,
    /// Per-agent thrust limit, N.
    pub u_max: f64,
    /// Combined braking force of both agents, `2 u_max`.
    pub delta_u_max: f64,
    /// Acceleration per unit force.
    pub thrust_scale: f64,
}

impl PairwiseBrakingCbf {
    /// Square agents of side `side` bounded by circles of radius
    /// `sqrt(2)/2 side`.
    pub fn new(side: f64, u_max: f64, thrust_scale: f64) -> Result<Self, CbfError> {
        if !(side > 0.0 && u_max > 0.0 && thrust_scale > 0.0) {
            return Err(CbfError::Invalid("side, u_max and thrust_scale must be positive".into()));
        }
        let r_p = std::f64::consts::FRAC_1_SQRT_2 * side;
        Ok(Self {
            d_s: 2.0 * r_p,
            u_max,
            delta_u_max: 2.0 * u_max,
            thrust_scale,
        })
    }

    /// Combined braking deceleration used inside the square root.
    pub fn braking_accel(&self) -> f64 {
        self.delta_u_max * self.thrust_scale
    }
}

/// Value below which `h1` is reported for agents inside `D_s`.
pub const BREACH_VALUE: f64 = -1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H1Eval {
    pub h: f64,
    /// `dh/d(dx)`.
    pub grad_dx: Vec3,
    /// `dh/d(dv)`.
    pub grad_dv: Vec3,
    /// Closing speed along the line of sight.
    pub v_bar: f64,
    /// Only approaching pairs are constrained.
    pub applicable: bool,
    pub breach: bool,
}

pub fn eval_h1(xi: &Vec3, vi: &Vec3, xj: &Vec3, vj: &Vec3, cbf: &PairwiseBrakingCbf) -> H1Eval {
    let dx = xi - xj;
    let dv = vi - vj;
    let d = dx.norm();
    let n = if d > 0.0 { dx / d } else { Vec3::x() };
    let v_bar = n.dot(&dv);
    let a = cbf.braking_accel();
    // dv' (I/d - dx dx'/d^3)
    let geom = if d > 0.0 { (dv - n * n.dot(&dv)) / d } else { Vec3::zeros() };
    if d <= cbf.d_s {
        log::debug!("agents inside the braking radius ({d:.4} <= {:.4})", cbf.d_s);
        return H1Eval {
            h: BREACH_VALUE,
            grad_dx: geom,
            grad_dv: n,
            v_bar,
            applicable: true,
            breach: true,
        };
    }
    let root = (2.0 * a * (d - cbf.d_s)).sqrt();
    H1Eval {
        h: v_bar + root,
        grad_dx: geom + n * (a / root),
        grad_dv: n,
        v_bar,
        applicable: v_bar < 0.0,
        breach: false,
    }
}

// ----------------------------------------------------------------------------
// Keep-out ellipsoid and inter-agent sphere HOCBFs.

/// Inflated ellipsoid barrier on a 6-state `(p, v)` in the target frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidBarrier {
    pub axes: Vec3,
}

impl Barrier for EllipsoidBarrier {
    fn value(&self, x: &DVector<f64>) -> f64 {
        (0..3).map(|i| x[i] * x[i] / (self.axes[i] * self.axes[i])).sum::<f64>() - 1.0
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(6, |i, _| if i < 3 { 2.0 * x[i] / (self.axes[i] * self.axes[i]) } else { 0.0 })
    }

    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(6, 6, |i, j| {
            if i == j && i < 3 {
                2.0 / (self.axes[i] * self.axes[i])
            } else {
                0.0
            }
        })
    }
}

/// Double integrator seen from a frame spinning at constant body rate:
/// `v_dot = R' k u - 2 w x v - w x (w x p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatingFrameDynamics {
    pub omega: Vec3,
    /// `R'` at the evaluation time, mapping inertial to target frame.
    pub to_body: nalgebra::Matrix3<f64>,
    pub thrust_scale: f64,
}

fn skew(v: &Vec3) -> nalgebra::Matrix3<f64> {
    nalgebra::Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl ControlAffine for RotatingFrameDynamics {
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let p = Vec3::new(x[0], x[1], x[2]);
        let v = Vec3::new(x[3], x[4], x[5]);
        let acc = -2.0 * self.omega.cross(&v) - self.omega.cross(&self.omega.cross(&p));
        DVector::from_row_slice(&[v.x, v.y, v.z, acc.x, acc.y, acc.z])
    }

    fn drift_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let w = skew(&self.omega);
        let mut j = DMatrix::zeros(6, 6);
        for i in 0..3 {
            j[(i, i + 3)] = 1.0;
        }
        j.view_mut((3, 0), (3, 3)).copy_from(&(-(w * w)));
        j.view_mut((3, 3), (3, 3)).copy_from(&(-2.0 * w));
        j
    }

    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(6, 3);
        g.view_mut((3, 0), (3, 3)).copy_from(&(self.to_body * self.thrust_scale));
        g
    }
}

/// Squared center distance minus squared safe radius on a stacked pair
/// state `(p_i, v_i, p_j, v_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDistanceBarrier {
    pub radius: f64,
}

impl Barrier for PairDistanceBarrier {
    fn value(&self, x: &DVector<f64>) -> f64 {
        (0..3).map(|i| (x[i] - x[6 + i]).powi(2)).sum::<f64>() - self.radius * self.radius
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(12);
        for i in 0..3 {
            let d = 2.0 * (x[i] - x[6 + i]);
            g[i] = d;
            g[6 + i] = -d;
        }
        g
    }

    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(12, 12);
        for i in 0..3 {
            h[(i, i)] = 2.0;
            h[(6 + i, 6 + i)] = 2.0;
            h[(i, 6 + i)] = -2.0;
            h[(6 + i, i)] = -2.0;
        }
        h
    }
}

/// Two independent double integrators stacked, inputs `(u_i, u_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDoubleIntegrator {
    pub thrust_scale: f64,
}

impl ControlAffine for PairDoubleIntegrator {
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(12, |i, _| match i {
            0..=2 => x[i + 3],
            6..=8 => x[i + 3],
            _ => 0.0,
        })
    }

    fn drift_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(12, 12);
        for i in 0..3 {
            j[(i, i + 3)] = 1.0;
            j[(6 + i, 9 + i)] = 1.0;
        }
        j
    }

    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(12, 6);
        for i in 0..3 {
            g[(3 + i, i)] = self.thrust_scale;
            g[(9 + i, 3 + i)] = self.thrust_scale;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeepOutHocbf {
    pub semi_axes: Vec3,
    /// Bounding-sphere radius of the agent, `sqrt(3)/2 L`.
    pub r_s: f64,
    /// Uncertainty buffer added to every semi-axis.
    pub eta: f64,
    pub alphas: [ClassKappa; 2],
}

impl KeepOutHocbf {
    pub fn new(semi_axes: Vec3, side: f64, alphas: [ClassKappa; 2]) -> Result<Self, CbfError> {
        if semi_axes.iter().any(|a| !(*a > 0.0)) || !(side > 0.0) {
            return Err(CbfError::Invalid("semi-axes and side must be positive".into()));
        }
        Ok(Self {
            semi_axes,
            r_s: 0.5 * 3f64.sqrt() * side,
            eta: 0.0,
            alphas,
        })
    }

    pub fn with_eta(&self, eta: f64) -> Self {
        Self { eta, ..self.clone() }
    }

    pub fn effective_axes(&self) -> Vec3 {
        self.semi_axes.add_scalar(self.r_s + self.eta)
    }

    pub fn barrier(&self) -> EllipsoidBarrier {
        EllipsoidBarrier {
            axes: self.effective_axes(),
        }
    }
}

/// Keep-out value at a target-frame position.
pub fn eval_hkoz(p_body: &Vec3, koz: &KeepOutHocbf) -> f64 {
    let ax = koz.effective_axes();
    (0..3).map(|i| p_body[i] * p_body[i] / (ax[i] * ax[i])).sum::<f64>() - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterAgentHocbf {
    pub r_s: f64,
    pub eta_i: f64,
    pub eta_j: f64,
    pub alphas: [ClassKappa; 2],
}

impl InterAgentHocbf {
    pub fn new(side: f64, alphas: [ClassKappa; 2]) -> Self {
        Self {
            r_s: 0.5 * 3f64.sqrt() * side,
            eta_i: 0.0,
            eta_j: 0.0,
            alphas,
        }
    }

    pub fn safe_radius(&self) -> f64 {
        2.0 * self.r_s + self.eta_i + self.eta_j
    }

    pub fn barrier(&self) -> PairDistanceBarrier {
        PairDistanceBarrier {
            radius: self.safe_radius(),
        }
    }
}

pub fn eval_hca(pi: &Vec3, pj: &Vec3, ca: &InterAgentHocbf) -> f64 {
    (pi - pj).norm_squared() - ca.safe_radius().powi(2)
}

// ----------------------------------------------------------------------------
// Rows and the filter.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Braking { i: usize, j: usize },
    KeepOut { agent: usize },
    InterAgent { i: usize, j: usize },
}

/// `lf + lg' u >= -alpha` over the stacked controls of all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyRow {
    pub kind: RowKind,
    pub lf: f64,
    pub lg: DVector<f64>,
    pub alpha: f64,
    /// Barrier value the row was built from.
    pub h: f64,
}

impl SafetyRow {
    pub fn residual(&self, u: &DVector<f64>) -> f64 {
        self.lf + self.lg.dot(u) + self.alpha
    }
}

/// Braking rows for every approaching pair. `states` holds inertial
/// `(p, v)` per agent.
pub fn braking_rows(states: &[State6], cbf: &PairwiseBrakingCbf, alpha: &ClassKappa) -> Vec<SafetyRow> {
    let n = states.len();
    let mut rows = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (xi, vi) = split(&states[i]);
            let (xj, vj) = split(&states[j]);
            let e = eval_h1(&xi, &vi, &xj, &vj, cbf);
            if !e.applicable {
                continue;
            }
            let mut lg = DVector::zeros(3 * n);
            let gu = e.grad_dv * cbf.thrust_scale;
            for k in 0..3 {
                lg[3 * i + k] = gu[k];
                lg[3 * j + k] = -gu[k];
            }
            rows.push(SafetyRow {
                kind: RowKind::Braking { i, j },
                lf: e.grad_dx.dot(&(vi - vj)),
                lg,
                alpha: alpha.eval(e.h),
                h: e.h,
            });
        }
    }
    rows
}

fn split(x: &State6) -> (Vec3, Vec3) {
    (Vec3::new(x[0], x[1], x[2]), Vec3::new(x[3], x[4], x[5]))
}

/// Keep-out HOCBF row for `agent` with inertial state `x` at time `t`.
pub fn koz_row(
    agent: usize,
    n_agents: usize,
    x: &State6,
    rso: &RsoState,
    t: f64,
    koz: &KeepOutHocbf,
    thrust_scale: f64,
) -> Result<(SafetyRow, PsiChain), CbfError> {
    let xb = rso.state_to_rso_frame(x, t);
    let dynamics = RotatingFrameDynamics {
        omega: rso.omega_rso,
        to_body: rso.attitude_at(t).inverse().to_rotation_matrix().into_inner(),
        thrust_scale,
    };
    let chain = build_psi_chain(&koz.barrier(), &koz.alphas, &dynamics, &DVector::from_column_slice(xb.as_slice()))?;
    let mut lg = DVector::zeros(3 * n_agents);
    lg.rows_mut(3 * agent, 3).copy_from(&chain.lg);
    Ok((
        SafetyRow {
            kind: RowKind::KeepOut { agent },
            lf: chain.lf,
            lg,
            alpha: chain.alpha,
            h: chain.psi[0],
        },
        chain,
    ))
}

/// Inter-agent HOCBF row for the pair `(i, j)` with inertial states.
pub fn ca_row(
    i: usize,
    j: usize,
    n_agents: usize,
    xi: &State6,
    xj: &State6,
    ca: &InterAgentHocbf,
    thrust_scale: f64,
) -> Result<(SafetyRow, PsiChain), CbfError> {
    let mut x = DVector::zeros(12);
    x.rows_mut(0, 6).copy_from_slice(xi.as_slice());
    x.rows_mut(6, 6).copy_from_slice(xj.as_slice());
    let chain = build_psi_chain(&ca.barrier(), &ca.alphas, &PairDoubleIntegrator { thrust_scale }, &x)?;
    let mut lg = DVector::zeros(3 * n_agents);
    lg.rows_mut(3 * i, 3).copy_from(&chain.lg.rows(0, 3));
    lg.rows_mut(3 * j, 3).copy_from(&chain.lg.rows(3, 3));
    Ok((
        SafetyRow {
            kind: RowKind::InterAgent { i, j },
            lf: chain.lf,
            lg,
            alpha: chain.alpha,
            h: chain.psi[0],
        },
        chain,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub u_safe: Vec<Vec3>,
    /// One multiplier per row.
    pub duals: Vec<f64>,
    /// True when the QP failed and the braking fallback was applied.
    pub fallback: bool,
}

/// Default residual tolerance of [`is_active`].
pub const ACTIVE_TOL: f64 = 1e-6;

/// A row binds when its multiplier is positive or its residual vanishes.
pub fn is_active(row: &SafetyRow, u_safe: &[Vec3], dual: f64, tol: f64) -> bool {
    dual > 1e-8 || row.residual(&stack_controls(u_safe)) <= tol
}

pub fn stack_controls(u: &[Vec3]) -> DVector<f64> {
    DVector::from_fn(3 * u.len(), |i, _| u[i / 3][i % 3])
}

/// Per-axis saturated deceleration along `-v`.
pub fn max_braking(v: &Vec3, u_max: f64) -> Vec3 {
    let m = v.amax();
    if m <= 0.0 {
        Vec3::zeros()
    } else {
        -v * (u_max / m)
    }
}

/// Minimize `sum |u_k - u_p,k|^2 / 2` over all agents subject to the rows
/// and `|u| <= u_max` per axis. `velocities` feed the braking fallback.
pub fn safety_filter(u_p: &[Vec3], rows: &[SafetyRow], u_max: f64, velocities: &[Vec3]) -> FilterOutcome {
    let n = 3 * u_p.len();
    let up = stack_controls(u_p);
    let m = rows.len() + 2 * n;
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    for (r, row) in rows.iter().enumerate() {
        for k in 0..n {
            a[(r, k)] = -row.lg[k];
        }
        b[r] = row.lf + row.alpha;
    }
    for k in 0..n {
        a[(rows.len() + k, k)] = 1.0;
        b[rows.len() + k] = u_max;
        a[(rows.len() + n + k, k)] = -1.0;
        b[rows.len() + n + k] = u_max;
    }
    let p = QuadraticProgram::new(DMatrix::identity(n, n), -&up).with_inequalities(a, b);
    match solve_qp(&p) {
        Ok(r) if r.status == SolveStatus::Optimal => FilterOutcome {
            u_safe: (0..u_p.len())
                .map(|i| Vec3::new(r.primal[3 * i], r.primal[3 * i + 1], r.primal[3 * i + 2]))
                .collect(),
            duals: r.duals.rows(0, rows.len()).iter().copied().collect(),
            fallback: false,
        },
        other => {
            log::warn!("safety QP failed ({:?}); braking at full thrust", other.map(|r| r.status));
            FilterOutcome {
                u_safe: velocities.iter().map(|v| max_braking(v, u_max)).collect(),
                duals: vec![0.0; rows.len()],
                fallback: true,
            }
        }
    }
}

/// Braking-CBF filter over all agents.
pub fn cbf_qp_centralized(
    u_p: &[Vec3],
    states: &[State6],
    cbf: &PairwiseBrakingCbf,
    alpha: &ClassKappa,
) -> (FilterOutcome, Vec<SafetyRow>) {
    let rows = braking_rows(states, cbf, alpha);
    let vel: Vec<Vec3> = states.iter().map(|s| split(s).1).collect();
    (safety_filter(u_p, &rows, cbf.u_max, &vel), rows)
}

/// HOCBF filter over precomputed rows.
pub fn hocbf_qp(u_p: &[Vec3], rows: &[SafetyRow], u_max: f64, velocities: &[Vec3]) -> FilterOutcome {
    safety_filter(u_p, rows, u_max, velocities)
}
