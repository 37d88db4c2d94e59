//! Brute-force oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proxsafe::convex::{LinearProgram, QuadraticProgram};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random strongly convex 3-variable QP over a box of width `width`, with one
/// extra half-space that cuts through the box center.
pub struct BoxQp {
    pub problem: QuadraticProgram,
    pub lo: [f64; 3],
    pub width: f64,
}

pub fn random_box_qp(rng: &mut ChaCha8Rng, width: f64) -> BoxQp {
    let m = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
    let h = m.transpose() * &m + DMatrix::identity(3, 3) * 0.5;
    let c = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
    let lo = [
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
    ];
    let mut a = DMatrix::zeros(7, 3);
    let mut b = DVector::zeros(7);
    for i in 0..3 {
        a[(2 * i, i)] = 1.0;
        b[2 * i] = lo[i] + width;
        a[(2 * i + 1, i)] = -1.0;
        b[2 * i + 1] = -lo[i];
    }
    let g = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
    let center = DVector::from_fn(3, |i, _| lo[i] + 0.5 * width);
    for j in 0..3 {
        a[(6, j)] = g[j];
    }
    b[6] = g.dot(&center) + 0.02 * g.norm();
    BoxQp {
        problem: QuadraticProgram::new(h, c).with_inequalities(a, b),
        lo,
        width,
    }
}

/// Exhaustive grid search; returns the best feasible point and its objective.
pub fn grid_search(q: &BoxQp, step: f64) -> (DVector<f64>, f64) {
    let n = (q.width / step).round() as usize;
    scan(q, q.lo, step, n)
}

/// Coarse grid search followed by repeated 4x zooms over a window of four
/// coarse steps around the incumbent, clipped to the box.
pub fn refined_grid_search(q: &BoxQp, step: f64, zooms: usize) -> (DVector<f64>, f64) {
    let (mut x, mut f) = grid_search(q, step);
    let mut h = step;
    for _ in 0..zooms {
        let fine = h / 4.0;
        let lo = [0, 1, 2].map(|i| (x[i] - 4.0 * h).max(q.lo[i]));
        let (xn, fnew) = scan(q, lo, fine, 32);
        if fnew <= f {
            x = xn;
            f = fnew;
        }
        h = fine;
    }
    (x, f)
}

fn scan(q: &BoxQp, lo: [f64; 3], step: f64, n: usize) -> (DVector<f64>, f64) {
    let p = &q.problem;
    let hi = [0, 1, 2].map(|i| q.lo[i] + q.width);
    let h = &p.cost_matrix;
    let c = &p.cost_vector;
    let row = p.ineq_matrix.row(6);
    let b6 = p.ineq_vector[6];
    let mut best = f64::INFINITY;
    let mut arg = [0.0; 3];
    for i in 0..=n {
        let x = (lo[0] + i as f64 * step).min(hi[0]);
        for j in 0..=n {
            let y = (lo[1] + j as f64 * step).min(hi[1]);
            for k in 0..=n {
                let z = (lo[2] + k as f64 * step).min(hi[2]);
                if row[0] * x + row[1] * y + row[2] * z > b6 {
                    continue;
                }
                let v = [x, y, z];
                let mut f = 0.0;
                for r in 0..3 {
                    let mut hv = 0.0;
                    for s in 0..3 {
                        hv += h[(r, s)] * v[s];
                    }
                    f += 0.5 * v[r] * hv + c[r] * v[r];
                }
                if f < best {
                    best = f;
                    arg = v;
                }
            }
        }
    }
    (DVector::from_row_slice(&arg), best)
}

/// Random bounded 2D LP: a few random half-planes plus a bounding box.
pub fn random_lp_2d(rng: &mut ChaCha8Rng) -> LinearProgram {
    let k = rng.random_range(2..6);
    let m = k + 4;
    let mut a = DMatrix::zeros(m, 2);
    let mut b = DVector::zeros(m);
    for i in 0..k {
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        a[(i, 0)] = th.cos();
        a[(i, 1)] = th.sin();
        b[i] = rng.random_range(-0.5..2.0);
    }
    let r = 3.0;
    for (i, (ax, sgn)) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)].into_iter().enumerate() {
        a[(k + i, ax)] = sgn;
        b[k + i] = r;
    }
    let c = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
    LinearProgram::new(c, a, b)
}

/// Minimum over all feasible pairwise line intersections, or `None` when the
/// region is empty.
pub fn vertex_enumeration(p: &LinearProgram) -> Option<(DVector<f64>, f64)> {
    let a = &p.ineq_matrix;
    let b = &p.ineq_vector;
    let m = a.nrows();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for i in 0..m {
        for j in (i + 1)..m {
            let det = a[(i, 0)] * a[(j, 1)] - a[(i, 1)] * a[(j, 0)];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (b[i] * a[(j, 1)] - a[(i, 1)] * b[j]) / det;
            let y = (a[(i, 0)] * b[j] - b[i] * a[(j, 0)]) / det;
            let feasible = (0..m).all(|r| a[(r, 0)] * x + a[(r, 1)] * y <= b[r] + 1e-10);
            if !feasible {
                continue;
            }
            let f = p.cost_vector[0] * x + p.cost_vector[1] * y;
            if best.as_ref().is_none_or(|(_, v)| f < *v) {
                best = Some((DVector::from_row_slice(&[x, y]), f));
            }
        }
    }
    best
}

pub mod nees {
    use nalgebra::{Matrix6, UnitQuaternion, Vector6};
    use proxsafe::dynamics::{stack, Vec3};
    use proxsafe::estimation::{predict, process_noise, transition, update_range, MekfConfig, MekfState, RangeMeasurement};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    /// Ensemble-averaged translational NEES per tick over `runs` truth runs
    /// of a noisy double integrator ranged by the default anchors.
    pub fn ensemble_nees(runs: usize, ticks: usize, dt: f64, seed: u64) -> Vec<f64> {
        let cfg = MekfConfig::default();
        let q = process_noise(cfg.accel_noise, dt);
        let lq = q.cholesky().unwrap().l();
        let a = transition(dt);
        let p0 = (0.1, 0.01);
        let mut sum = vec![0.0; ticks];
        for run in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (run as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let n01 = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
            let nominal = stack(&Vec3::new(2.0, -1.0, 0.5), &Vec3::new(0.01, 0.02, 0.0));
            let mut truth = nominal;
            for i in 0..3 {
                truth[i] += p0.0 * n01(&mut rng);
                truth[i + 3] += p0.1 * n01(&mut rng);
            }
            let mut est = MekfState::new(nominal, p0.0, p0.1, UnitQuaternion::identity(), 1e-3);
            let range_noise = Normal::new(0.0, cfg.sensor.range_sigma).unwrap();
            let gyro_noise = Normal::new(0.0, cfg.sensor.gyro_sigma).unwrap();
            let accel = |k: usize| Vec3::new((k as f64 * 0.05).sin(), (k as f64 * 0.03).cos(), 0.0) * 1e-3;
            for (k, slot) in sum.iter_mut().enumerate() {
                let u = accel(k);
                let w = lq * Vector6::from_fn(|_, _| n01(&mut rng));
                let mut next = a * truth + w;
                for i in 0..3 {
                    next[i] += 0.5 * dt * dt * u[i];
                    next[i + 3] += dt * u[i];
                }
                truth = next;
                let gyro = Vec3::from_fn(|_, _| gyro_noise.sample(&mut rng));
                est = predict(&est, &u, &gyro, dt, &cfg);
                // Truth attitude stays at identity while the reference drifts
                // with the gyro noise the filter models.
                let tag = truth.fixed_rows::<3>(0) + cfg.sensor.tag_offset;
                for (j, anchor) in cfg.sensor.anchors.iter().enumerate() {
                    let z = RangeMeasurement {
                        anchor_id: j,
                        range: (tag - anchor).norm() + range_noise.sample(&mut rng),
                    };
                    est = update_range(&est, &z, &cfg).unwrap().state;
                }
                let e = truth - est.trans_mean;
                let pinv: Matrix6<f64> = est.trans_cov.try_inverse().unwrap();
                *slot += (e.transpose() * pinv * e)[0];
            }
        }
        sum.iter().map(|s| s / runs as f64).collect()
    }
}

pub mod fd;
