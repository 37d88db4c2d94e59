//! Minimum-energy relocation around the keep-out ellipsoid, in the target
//! frame, and the start-time phasing used to deconflict two references.
//!
//! The transcription keeps only the controls as unknowns; positions are
//! affine in them. The ellipsoid constraint is replaced at each iteration by
//! its tangent half-space at the previous iterate, which lies inside the
//! feasible set because the ellipsoid function is convex. Each iterate is
//! therefore feasible and the energy is nonincreasing.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::convex::{ConvexError, FactoredQp, SolveStatus, Tolerances};
use crate::dynamics::{stack, thrust_scale, State6, Vec3, DEFAULT_MASS, DEFAULT_SIDE, DEFAULT_THRUST_MAX};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("invalid planner setup: {0}")]
    Invalid(String),
    #[error("boundary state {0} lies inside the keep-out ellipsoid")]
    BoundaryInside(&'static str),
    #[error("no convergence after {iterations} iterations (energy {energy:.6e})")]
    NoConvergence {
        iterations: usize,
        energy: f64,
        last: Box<ReferenceTrajectory>,
    },
    #[error("transcribed QP ended with status {0:?}")]
    Solver(SolveStatus),
    #[error(transparent)]
    Convex(#[from] ConvexError),
    #[error("trajectory file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub total_time: f64,
    /// Per-axis force bound, N.
    pub thrust_max: f64,
    pub semi_axes: Vec3,
    /// Added to every semi-axis; the agent's bounding-sphere radius.
    pub body_radius: f64,
    pub dt: f64,
    pub mass: f64,
    pub max_iterations: usize,
    /// Per-axis position trust region around the previous iterate at
    /// constrained nodes; `None` disables it.
    pub trust_region: Option<f64>,
    /// Nodes with ellipsoid value below this get a linearized row.
    pub near_threshold: f64,
    /// Required value of the linearized ellipsoid function.
    pub margin: f64,
    /// Relative energy change that ends the iteration.
    pub tolerance: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            total_time: 300.0,
            thrust_max: DEFAULT_THRUST_MAX,
            semi_axes: Vec3::new(2.0, 0.5, 0.5),
            body_radius: 0.5 * 3f64.sqrt() * DEFAULT_SIDE,
            dt: 1.0,
            mass: DEFAULT_MASS,
            max_iterations: 60,
            trust_region: None,
            near_threshold: 0.5,
            margin: 1e-7,
            tolerance: 1e-6,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |m: &str| Err(PlannerError::Invalid(m.to_string()));
        if !(self.total_time > 0.0) || !(self.thrust_max > 0.0) {
            return bad("total time and thrust limit must be positive");
        }
        if !(self.dt > 0.0) || !(self.mass > 0.0) {
            return bad("grid step and mass must be positive");
        }
        if self.semi_axes.iter().any(|a| !(*a > 0.0)) || !(self.body_radius >= 0.0) {
            return bad("semi-axes must be positive and body radius nonnegative");
        }
        let n = self.total_time / self.dt;
        if (n - n.round()).abs() > 1e-9 {
            return bad("total time must be a whole number of grid steps");
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        (self.total_time / self.dt).round() as usize
    }

    pub fn effective_axes(&self) -> Vec3 {
        self.semi_axes.add_scalar(self.body_radius)
    }
}

/// Ellipsoid function `p' M p - 1` on the inflated axes.
pub fn ellipsoid_value(p: &Vec3, axes: &Vec3) -> f64 {
    (0..3).map(|i| p[i] * p[i] / (axes[i] * axes[i])).sum::<f64>() - 1.0
}

fn ellipsoid_gradient(p: &Vec3, axes: &Vec3) -> Vec3 {
    Vec3::from_fn(|i, _| 2.0 * p[i] / (axes[i] * axes[i]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefSample {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
}

impl RefSample {
    pub fn state(&self) -> State6 {
        stack(&self.position, &self.velocity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub samples: Vec<RefSample>,
    /// One force per grid interval; empty for loaded trajectories.
    pub controls: Vec<Vec3>,
    pub total_time: f64,
    pub dt: f64,
}

impl ReferenceTrajectory {
    pub fn start(&self) -> State6 {
        self.samples[0].state()
    }

    pub fn goal(&self) -> State6 {
        self.samples[self.samples.len() - 1].state()
    }

    /// Linear interpolation in time; endpoints held outside the support.
    pub fn sample(&self, t: f64) -> State6 {
        let first = &self.samples[0];
        let last = &self.samples[self.samples.len() - 1];
        if t <= first.t {
            return first.state();
        }
        if t >= last.t {
            return last.state();
        }
        let idx = self.samples.partition_point(|s| s.t <= t) - 1;
        let a = &self.samples[idx];
        let b = &self.samples[idx + 1];
        let w = (t - a.t) / (b.t - a.t);
        stack(&a.position.lerp(&b.position, w), &a.velocity.lerp(&b.velocity, w))
    }

    /// Energy `sum |u|^2 dt` of the stored controls.
    pub fn energy(&self) -> f64 {
        self.controls.iter().map(|u| u.norm_squared()).sum::<f64>() * self.dt
    }

    pub fn min_ellipsoid_value(&self, axes: &Vec3) -> f64 {
        self.samples
            .iter()
            .map(|s| ellipsoid_value(&s.position, axes))
            .fold(f64::INFINITY, f64::min)
    }

    /// Writes `t,x,y,z,vx,vy,vz` with a header row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PlannerError> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| PlannerError::Io(e.to_string());
        wr.write_record(["t", "x", "y", "z", "vx", "vy", "vz"]).map_err(io)?;
        for s in &self.samples {
            let row = [
                s.t,
                s.position.x,
                s.position.y,
                s.position.z,
                s.velocity.x,
                s.velocity.y,
                s.velocity.z,
            ];
            wr.write_record(row.iter().map(|v| format!("{v:.12e}"))).map_err(io)?;
        }
        wr.flush().map_err(|e| PlannerError::Io(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, PlannerError> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers().map_err(|e| PlannerError::Io(e.to_string()))?.clone();
        let expect = ["t", "x", "y", "z", "vx", "vy", "vz"];
        if headers.iter().map(str::trim).collect::<Vec<_>>() != expect {
            return Err(PlannerError::Io(format!("expected header {}", expect.join(","))));
        }
        let mut samples = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| PlannerError::Io(e.to_string()))?;
            let v: Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
            let v = v.map_err(|e| PlannerError::Io(format!("row {}: {e}", line + 2)))?;
            if v.len() != 7 {
                return Err(PlannerError::Io(format!("row {}: expected 7 columns", line + 2)));
            }
            samples.push(RefSample {
                t: v[0],
                position: Vec3::new(v[1], v[2], v[3]),
                velocity: Vec3::new(v[4], v[5], v[6]),
            });
        }
        if samples.len() < 2 {
            return Err(PlannerError::Io("need at least two samples".into()));
        }
        if samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(PlannerError::Io("times must increase".into()));
        }
        let total_time = samples[samples.len() - 1].t - samples[0].t;
        let dt = samples[1].t - samples[0].t;
        Ok(Self {
            samples,
            controls: Vec::new(),
            total_time,
            dt,
        })
    }
}

/// Rest-to-rest cubic from `start` to `goal`: the minimum-energy transfer
/// in free space. Controls are the per-interval average forces.
pub fn rest_to_rest(start: Vec3, goal: Vec3, total_time: f64, dt: f64, mass: f64) -> Result<ReferenceTrajectory, PlannerError> {
    if !(total_time > 0.0 && dt > 0.0 && mass > 0.0) {
        return Err(PlannerError::Invalid("duration, step and mass must be positive".into()));
    }
    let n = (total_time / dt).round() as usize;
    if n == 0 || ((n as f64) * dt - total_time).abs() > 1e-9 * total_time {
        return Err(PlannerError::Invalid(format!(
            "duration {total_time} is not a multiple of the step {dt}"
        )));
    }
    let d = goal - start;
    let at = |t: f64| {
        let s = t / total_time;
        (start + d * (3.0 * s * s - 2.0 * s * s * s), d * (6.0 * s * (1.0 - s) / total_time))
    };
    let samples: Vec<RefSample> = (0..=n)
        .map(|i| {
            let t = i as f64 * dt;
            let (position, velocity) = at(t);
            RefSample { t, position, velocity }
        })
        .collect();
    let k = thrust_scale(mass);
    let controls = samples.windows(2).map(|w| (w[1].velocity - w[0].velocity) / (dt * k)).collect();
    Ok(ReferenceTrajectory {
        samples,
        controls,
        total_time,
        dt,
    })
}

/// Affine map from controls to node states for the sampled double integrator.
struct Transcription {
    n: usize,
    dt: f64,
    k: f64,
}

impl Transcription {
    /// Coefficient of `u_j` in position at node `i`.
    fn pos_coeff(&self, i: usize, j: usize) -> f64 {
        if j >= i {
            0.0
        } else {
            self.k * self.dt * self.dt * (i as f64 - j as f64 - 0.5)
        }
    }

    fn vel_coeff(&self, i: usize, j: usize) -> f64 {
        if j >= i {
            0.0
        } else {
            self.k * self.dt
        }
    }

    fn free(&self, x0: &State6, i: usize) -> State6 {
        let t = i as f64 * self.dt;
        let mut x = *x0;
        for a in 0..3 {
            x[a] += t * x0[a + 3];
        }
        x
    }

    fn rollout(&self, x0: &State6, u: &DVector<f64>) -> Vec<State6> {
        let mut out = Vec::with_capacity(self.n + 1);
        let mut x = *x0;
        out.push(x);
        for j in 0..self.n {
            for a in 0..3 {
                let acc = self.k * u[3 * j + a];
                x[a] += self.dt * x[a + 3] + 0.5 * self.dt * self.dt * acc;
                x[a + 3] += self.dt * acc;
            }
            out.push(x);
        }
        out
    }
}

fn to_trajectory(tr: &Transcription, x0: &State6, u: &DVector<f64>) -> ReferenceTrajectory {
    let states = tr.rollout(x0, u);
    ReferenceTrajectory {
        samples: states
            .iter()
            .enumerate()
            .map(|(i, x)| RefSample {
                t: i as f64 * tr.dt,
                position: Vec3::new(x[0], x[1], x[2]),
                velocity: Vec3::new(x[3], x[4], x[5]),
            })
            .collect(),
        controls: (0..tr.n).map(|j| Vec3::new(u[3 * j], u[3 * j + 1], u[3 * j + 2])).collect(),
        total_time: tr.n as f64 * tr.dt,
        dt: tr.dt,
    }
}

/// Straight line from start to goal, with points inside the ellipsoid pushed
/// out along a common detour direction.
fn initial_guess(start: &Vec3, goal: &Vec3, n: usize, axes: &Vec3) -> Vec<Vec3> {
    let line = goal - start;
    let dir = if line.norm() > 0.0 { line.normalize() } else { Vec3::x() };
    let closest = start - dir * start.dot(&dir);
    let detour = if closest.norm() > 1e-6 * axes.amax() {
        closest.normalize()
    } else {
        // Go around the thinnest axis perpendicular to the line.
        let mut best = Vec3::zeros();
        let mut best_len = f64::INFINITY;
        for i in 0..3 {
            let mut e = Vec3::zeros();
            e[i] = 1.0;
            let perp = e - dir * dir.dot(&e);
            if perp.norm() > 1e-6 && axes[i] < best_len {
                best_len = axes[i];
                best = perp.normalize();
            }
        }
        best
    };
    (0..=n)
        .map(|i| {
            let p = start + line * (i as f64 / n as f64);
            if ellipsoid_value(&p, axes) >= 0.0 {
                return p;
            }
            // Smallest t >= 0 with p + t d on the surface.
            let m = Vec3::from_fn(|i, _| 1.0 / (axes[i] * axes[i]));
            let qa: f64 = (0..3).map(|i| m[i] * detour[i] * detour[i]).sum();
            let qb: f64 = (0..3).map(|i| 2.0 * m[i] * p[i] * detour[i]).sum();
            let qc = ellipsoid_value(&p, axes);
            let t = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
            p + detour * (t * 1.05)
        })
        .collect()
}

/// Minimum-energy relocation from `start` to `goal` in `cfg.total_time`.
pub fn plan_relocation(start: &State6, goal: &State6, cfg: &PlannerConfig) -> Result<ReferenceTrajectory, PlannerError> {
    cfg.validate()?;
    let axes = cfg.effective_axes();
    let p_start = Vec3::new(start[0], start[1], start[2]);
    let p_goal = Vec3::new(goal[0], goal[1], goal[2]);
    if ellipsoid_value(&p_start, &axes) < 0.0 {
        return Err(PlannerError::BoundaryInside("start"));
    }
    if ellipsoid_value(&p_goal, &axes) < 0.0 {
        return Err(PlannerError::BoundaryInside("goal"));
    }
    let n = cfg.nodes();
    let nv = 3 * n;
    let tr = Transcription {
        n,
        dt: cfg.dt,
        k: thrust_scale(cfg.mass),
    };
    // Terminal equalities.
    let mut e = DMatrix::zeros(6, nv);
    let mut d = DVector::zeros(6);
    let free_n = tr.free(start, n);
    for a in 0..3 {
        for j in 0..n {
            e[(a, 3 * j + a)] = tr.pos_coeff(n, j);
            e[(a + 3, 3 * j + a)] = tr.vel_coeff(n, j);
        }
        d[a] = goal[a] - free_n[a];
        d[a + 3] = goal[a + 3] - free_n[a + 3];
    }
    let factored = FactoredQp::new(DMatrix::identity(nv, nv) * (2.0 * cfg.dt))?;
    let c = DVector::zeros(nv);
    let tol = Tolerances::default();

    let mut anchor: Vec<Vec3> = initial_guess(&p_start, &p_goal, n, &axes);
    let mut constrained: Vec<bool> = anchor.iter().map(|p| ellipsoid_value(p, &axes) < cfg.near_threshold).collect();
    constrained[0] = false;
    constrained[n] = false;
    let mut energy_prev = f64::INFINITY;
    let mut last: Option<ReferenceTrajectory> = None;
    let mut energy = f64::INFINITY;
    for it in 0..cfg.max_iterations {
        // Inner loop: add any node the solution pushes inside.
        let (u, traj) = loop {
            let (a, b) = build_rows(&tr, start, &anchor, &constrained, &axes, cfg);
            let r = factored.solve(&c, &a, &b, &e, &d, &tol);
            if r.status != SolveStatus::Optimal {
                return Err(PlannerError::Solver(r.status));
            }
            let u = r.primal;
            let traj = to_trajectory(&tr, start, &u);
            let mut added = false;
            for (i, s) in traj.samples.iter().enumerate() {
                if !constrained[i] && ellipsoid_value(&s.position, &axes) < cfg.near_threshold && i != 0 && i != n {
                    constrained[i] = true;
                    added = true;
                }
            }
            if !added {
                break (u, traj);
            }
        };
        energy = traj.energy();
        let step = traj
            .samples
            .iter()
            .zip(&anchor)
            .map(|(s, p)| (s.position - p).amax())
            .fold(0.0, f64::max);
        anchor = traj.samples.iter().map(|s| s.position).collect();
        let _ = u;
        last = Some(traj);
        if (energy_prev - energy).abs() <= cfg.tolerance * energy && step < 1e-4 {
            log::debug!("relocation plan converged in {} iterations", it + 1);
            return Ok(last.unwrap());
        }
        energy_prev = energy;
    }
    Err(PlannerError::NoConvergence {
        iterations: cfg.max_iterations,
        energy,
        last: Box::new(last.unwrap()),
    })
}

fn build_rows(
    tr: &Transcription,
    start: &State6,
    anchor: &[Vec3],
    constrained: &[bool],
    axes: &Vec3,
    cfg: &PlannerConfig,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = tr.n;
    let nv = 3 * n;
    let nodes: Vec<usize> = (0..=n).filter(|&i| constrained[i]).collect();
    let per_node = if cfg.trust_region.is_some() { 7 } else { 1 };
    let m = 2 * nv + per_node * nodes.len();
    let mut a = DMatrix::zeros(m, nv);
    let mut b = DVector::zeros(m);
    for i in 0..nv {
        a[(i, i)] = 1.0;
        b[i] = cfg.thrust_max;
        a[(nv + i, i)] = -1.0;
        b[nv + i] = cfg.thrust_max;
    }
    let mut r = 2 * nv;
    for &i in &nodes {
        let p = anchor[i];
        let g = ellipsoid_gradient(&p, axes);
        let free = tr.free(start, i);
        let pf = Vec3::new(free[0], free[1], free[2]);
        // h(p) + g'(P_free + G u - p) >= margin
        for j in 0..i {
            let coef = tr.pos_coeff(i, j);
            for ax in 0..3 {
                a[(r, 3 * j + ax)] = -g[ax] * coef;
            }
        }
        b[r] = ellipsoid_value(&p, axes) - cfg.margin + g.dot(&(pf - p));
        r += 1;
        if let Some(delta) = cfg.trust_region {
            for ax in 0..3 {
                for j in 0..i {
                    let coef = tr.pos_coeff(i, j);
                    a[(r, 3 * j + ax)] = coef;
                    a[(r + 1, 3 * j + ax)] = -coef;
                }
                b[r] = p[ax] + delta - pf[ax];
                b[r + 1] = -(p[ax] - delta - pf[ax]);
                r += 2;
            }
        }
    }
    (a, b)
}

/// Distance between two references over a common grid, with `b` delayed by
/// `tau` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceCurve {
    pub t: Vec<f64>,
    pub distance: Vec<f64>,
}

impl DistanceCurve {
    /// Trapezoidal area between `d_thr` and the curve where the curve is
    /// below it.
    pub fn area_below(&self, d_thr: f64) -> f64 {
        let f: Vec<f64> = self.distance.iter().map(|d| (d_thr - d).max(0.0)).collect();
        self.t
            .windows(2)
            .zip(f.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    }

    pub fn min_distance(&self) -> f64 {
        self.distance.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn relative_distance_curve(a: &ReferenceTrajectory, b: &ReferenceTrajectory, tau: f64) -> DistanceCurve {
    let dt = a.dt.min(b.dt);
    let t0 = a.samples[0].t.min(b.samples[0].t + tau);
    let t1 = a.samples[a.samples.len() - 1].t.max(b.samples[b.samples.len() - 1].t + tau);
    let steps = ((t1 - t0) / dt).ceil() as usize;
    let mut t = Vec::with_capacity(steps + 1);
    let mut distance = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let tk = (t0 + k as f64 * dt).min(t1);
        let pa = a.sample(tk);
        let pb = b.sample(tk - tau);
        t.push(tk);
        distance.push(((pa - pb).fixed_rows::<3>(0)).norm());
    }
    DistanceCurve { t, distance }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseResult {
    /// Delay applied to the second reference, s.
    pub tau: f64,
    /// Below-threshold area at `tau`.
    pub area: f64,
    /// False when no delay in range clears the threshold.
    pub cleared: bool,
}

/// Smallest `|tau|` (grid, then bisection on the zero-area boundary) that
/// clears the threshold, searching both signs up to `tau_max`.
pub fn optimize_phase(a: &ReferenceTrajectory, b: &ReferenceTrajectory, d_thr: f64, tau_max: f64, grid_step: f64) -> PhaseResult {
    let area = |tau: f64| relative_distance_curve(a, b, tau).area_below(d_thr);
    let a0 = area(0.0);
    if a0 == 0.0 {
        return PhaseResult {
            tau: 0.0,
            area: 0.0,
            cleared: true,
        };
    }
    let mut best = (0.0, a0);
    let steps = (tau_max / grid_step).ceil() as usize;
    for k in 1..=steps {
        let mag = (k as f64 * grid_step).min(tau_max);
        for tau in [mag, -mag] {
            let v = area(tau);
            if v < best.1 {
                best = (tau, v);
            }
            if v == 0.0 {
                // Bisect between the last positive-area delay and this one.
                let (mut lo, mut hi) = (tau - grid_step * tau.signum(), tau);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    if area(mid) == 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if (hi - lo).abs() < 1e-6 {
                        break;
                    }
                }
                return PhaseResult {
                    tau: hi,
                    area: area(hi),
                    cleared: true,
                };
            }
        }
    }
    PhaseResult {
        tau: best.0,
        area: best.1,
        cleared: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_cfg() -> PlannerConfig {
        PlannerConfig {
            total_time: 60.0,
            ..PlannerConfig::default()
        }
    }

    #[test]
    fn start_equals_goal_is_zero_control() {
        let x = stack(&Vec3::new(3.0, 1.0, 0.0), &Vec3::zeros());
        let t = plan_relocation(&x, &x, &short_cfg()).unwrap();
        assert!(t.controls.iter().all(|u| u.amax() < 1e-12));
        assert!(t.samples.iter().all(|s| (s.position - Vec3::new(3.0, 1.0, 0.0)).amax() < 1e-12));
        assert_eq!(t.samples.len(), 61);
    }

    #[test]
    fn boundary_inside_is_rejected() {
        let a = stack(&Vec3::zeros(), &Vec3::zeros());
        let b = stack(&Vec3::new(5.0, 0.0, 0.0), &Vec3::zeros());
        assert!(matches!(
            plan_relocation(&a, &b, &short_cfg()),
            Err(PlannerError::BoundaryInside("start"))
        ));
    }

    #[test]
    fn sampling_interpolates_and_holds() {
        let x0 = stack(&Vec3::new(3.0, 0.0, 0.0), &Vec3::zeros());
        let x1 = stack(&Vec3::new(3.0, 2.0, 0.0), &Vec3::zeros());
        let t = plan_relocation(&x0, &x1, &short_cfg()).unwrap();
        let mid = t.sample(10.5);
        let expect = (t.samples[10].state() + t.samples[11].state()) * 0.5;
        assert!((mid - expect).amax() < 1e-12);
        assert!((t.sample(1e3) - x1).amax() < 1e-9);
        assert_eq!(t.sample(-5.0), x0);
    }

    #[test]
    fn csv_round_trip() {
        let x0 = stack(&Vec3::new(3.0, 0.0, 0.0), &Vec3::zeros());
        let x1 = stack(&Vec3::new(0.0, 2.0, 1.0), &Vec3::zeros());
        let t = plan_relocation(&x0, &x1, &short_cfg()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ReferenceTrajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.samples.len(), t.samples.len());
        for (a, b) in back.samples.iter().zip(&t.samples) {
            assert!((a.state() - b.state()).amax() < 1e-11);
        }
        assert!(ReferenceTrajectory::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn identical_and_parallel_curves() {
        let x0 = stack(&Vec3::new(3.0, 0.0, 0.0), &Vec3::zeros());
        let x1 = stack(&Vec3::new(3.0, 4.0, 0.0), &Vec3::zeros());
        let a = plan_relocation(&x0, &x1, &short_cfg()).unwrap();
        let c = relative_distance_curve(&a, &a, 0.0);
        assert!(c.distance.iter().all(|d| *d == 0.0));
        let mut b = a.clone();
        for s in &mut b.samples {
            s.position.z += 0.7;
        }
        let c = relative_distance_curve(&a, &b, 0.0);
        assert!(c.distance.iter().all(|d| (d - 0.7).abs() < 1e-12));
        assert_eq!(optimize_phase(&a, &b, 0.5, 30.0, 1.0).tau, 0.0);
    }
}
