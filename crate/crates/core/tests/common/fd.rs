//! Central-difference checks of the analytic gradients on random states.
//! Each check returns the worst relative error seen.

use nalgebra::{DVector, UnitQuaternion};
use proxsafe::cbf::{
    build_psi_chain, eval_h1, Barrier, ClassKappa, ControlAffine, InterAgentHocbf, KeepOutHocbf, PairDoubleIntegrator, PairwiseBrakingCbf,
    RotatingFrameDynamics,
};
use proxsafe::dcol::{min_scaling, Polytope};
use proxsafe::dynamics::{thrust_scale, Vec3, DEFAULT_MASS, DEFAULT_SIDE, DEFAULT_THRUST_MAX};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;

fn rel(analytic: &DVector<f64>, numeric: &DVector<f64>) -> f64 {
    (analytic - numeric).amax() / numeric.amax().max(analytic.amax()).max(1e-3)
}

fn central(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, step: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut up = x.clone();
        let mut dn = x.clone();
        up[i] += step;
        dn[i] -= step;
        (f(&up) - f(&dn)) / (2.0 * step)
    })
}

fn vec3(rng: &mut ChaCha8Rng, r: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.random_range(-r..r))
}

fn kappa(rng: &mut ChaCha8Rng) -> ClassKappa {
    let g = rng.random_range(0.05..1.0);
    if rng.random_bool(0.5) {
        ClassKappa::linear(g)
    } else {
        ClassKappa::cubic(g)
    }
}

/// Braking barrier against relative position and velocity.
pub fn braking(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cbf = PairwiseBrakingCbf::new(DEFAULT_SIDE, DEFAULT_THRUST_MAX, thrust_scale(DEFAULT_MASS)).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let dir = vec3(&mut rng, 1.0).normalize();
        let d = cbf.d_s + rng.random_range(0.01..2.0);
        let xj = vec3(&mut rng, 1.0);
        let xi = xj + dir * d;
        let (vi, vj) = (vec3(&mut rng, 0.05), vec3(&mut rng, 0.05));
        let e = eval_h1(&xi, &vi, &xj, &vj, &cbf);
        let mut x = DVector::zeros(6);
        x.rows_mut(0, 3).copy_from(&xi);
        x.rows_mut(3, 3).copy_from(&vi);
        let h = |x: &DVector<f64>| eval_h1(&Vec3::new(x[0], x[1], x[2]), &Vec3::new(x[3], x[4], x[5]), &xj, &vj, &cbf).h;
        let num = central(h, &x, STEP);
        let mut ana = DVector::zeros(6);
        ana.rows_mut(0, 3).copy_from(&e.grad_dx);
        ana.rows_mut(3, 3).copy_from(&e.grad_dv);
        worst = worst.max(rel(&ana, &num));
    }
    worst
}

fn chain_error(h: &dyn Barrier, alphas: &[ClassKappa], dynamics: &dyn ControlAffine, x: &DVector<f64>) -> f64 {
    let chain = build_psi_chain(h, alphas, dynamics, x).unwrap();
    let last = |x: &DVector<f64>| *build_psi_chain(h, alphas, dynamics, x).unwrap().psi.last().unwrap();
    rel(&chain.grad_last, &central(last, x, STEP))
}

/// Keep-out chain, target frame, random tumble and attitude.
pub fn keep_out_chain(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let axes = Vec3::new(rng.random_range(0.5..3.0), rng.random_range(0.2..1.0), rng.random_range(0.2..1.0));
        let koz = KeepOutHocbf::new(axes, DEFAULT_SIDE, [kappa(&mut rng), kappa(&mut rng)])
            .unwrap()
            .with_eta(rng.random_range(0.0..0.05));
        let att = UnitQuaternion::from_scaled_axis(vec3(&mut rng, 3.0));
        let dynamics = RotatingFrameDynamics {
            omega: vec3(&mut rng, 0.02),
            to_body: att.to_rotation_matrix().into_inner(),
            thrust_scale: thrust_scale(DEFAULT_MASS),
        };
        let dir = vec3(&mut rng, 1.0).normalize();
        let ax = koz.effective_axes();
        let scale = rng.random_range(1.02..2.0) / (0..3).map(|i| (dir[i] / ax[i]).powi(2)).sum::<f64>().sqrt();
        let p = dir * scale;
        let v = vec3(&mut rng, 0.05);
        let x = DVector::from_row_slice(&[p.x, p.y, p.z, v.x, v.y, v.z]);
        worst = worst.max(chain_error(&koz.barrier(), &koz.alphas, &dynamics, &x));
    }
    worst
}

/// Inter-agent chain on the stacked pair state.
pub fn pair_chain(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let mut ca = InterAgentHocbf::new(DEFAULT_SIDE, [kappa(&mut rng), kappa(&mut rng)]);
        ca.eta_i = rng.random_range(0.0..0.03);
        ca.eta_j = rng.random_range(0.0..0.03);
        let pj = vec3(&mut rng, 1.0);
        let pi = pj + vec3(&mut rng, 1.0).normalize() * (ca.safe_radius() + rng.random_range(0.01..1.5));
        let (vi, vj) = (vec3(&mut rng, 0.05), vec3(&mut rng, 0.05));
        let mut x = DVector::zeros(12);
        for k in 0..3 {
            x[k] = pi[k];
            x[3 + k] = vi[k];
            x[6 + k] = pj[k];
            x[9 + k] = vj[k];
        }
        let dynamics = PairDoubleIntegrator {
            thrust_scale: thrust_scale(DEFAULT_MASS),
        };
        worst = worst.max(chain_error(&ca.barrier(), &ca.alphas, &dynamics, &x));
    }
    worst
}

/// Scaling gradient with respect to the first body's center: rotated cube
/// against a rotated box, both in general position.
pub fn scaling_center(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < n {
        let rot = |rng: &mut ChaCha8Rng| UnitQuaternion::from_scaled_axis(vec3(rng, 3.0));
        let obstacle = Polytope::cuboid(Vec3::new(4.0, 1.0, 1.0)).with_pose(rot(&mut rng), vec3(&mut rng, 0.5));
        let r1 = rot(&mut rng);
        let c = vec3(&mut rng, 1.0).normalize() * rng.random_range(0.8..4.0);
        let cube = |c: Vec3| Polytope::cube(DEFAULT_SIDE).with_pose(r1, c);
        let res = min_scaling(&cube(c), &obstacle).unwrap();
        if res.degenerate {
            continue;
        }
        let x = DVector::from_row_slice(c.as_slice());
        let s = |x: &DVector<f64>| min_scaling(&cube(Vec3::new(x[0], x[1], x[2])), &obstacle).unwrap().s;
        let num = central(s, &x, STEP);
        worst = worst.max(rel(&DVector::from_row_slice(res.grad_s_center.as_slice()), &num));
        checked += 1;
    }
    worst
}
