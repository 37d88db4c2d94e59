mod common;

use nalgebra::{Matrix3, Matrix6, UnitQuaternion, Vector3};
use proxsafe::dynamics::{stack, Vec3};
use proxsafe::estimation::{predict, process_noise, transition, uncertainty_buffer, update_range, MekfConfig, MekfState, RangeMeasurement};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn hundred_predictions_match_batch_covariance() {
    let cfg = MekfConfig::default();
    let dt = 0.5;
    let mut s = MekfState::new(stack(&Vec3::zeros(), &Vec3::zeros()), 0.1, 0.01, UnitQuaternion::identity(), 0.01);
    let p0 = s.trans_cov;
    for _ in 0..100 {
        s = predict(&s, &Vec3::zeros(), &Vec3::zeros(), dt, &cfg);
    }
    let a = transition(dt);
    let q = process_noise(cfg.accel_noise, dt);
    let a100 = a.pow(100);
    let mut batch = a100 * p0 * a100.transpose();
    let mut ak: Matrix6<f64> = Matrix6::identity();
    for _ in 0..100 {
        batch += ak * q * ak.transpose();
        ak *= a;
    }
    assert!((s.trans_cov - batch).amax() < 1e-9);
}

#[test]
fn static_agent_matches_batch_least_squares() {
    let cfg = MekfConfig {
        gate_sigma: 1e6,
        ..MekfConfig::default()
    };
    let sigma = cfg.sensor.range_sigma;
    let n = 500;
    let trials = 20;
    let truth = Vec3::new(1.5, -0.7, 0.4);
    let mut sq_filter = Vector3::zeros();
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + t);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut s = MekfState::new(
            stack(&Vec3::new(1.0, 0.0, 0.0), &Vec3::zeros()),
            1.0,
            1e-9,
            UnitQuaternion::identity(),
            1e-12,
        );
        let mut zs = Vec::with_capacity(n);
        for i in 0..n {
            let j = i % 4;
            let r = (truth + cfg.sensor.tag_offset - cfg.sensor.anchors[j]).norm() + noise.sample(&mut rng);
            zs.push((j, r));
            s = update_range(&s, &RangeMeasurement { anchor_id: j, range: r }, &cfg).unwrap().state;
        }
        // Gauss-Newton on all ranges at once.
        let mut x = Vec3::new(1.0, 0.0, 0.0);
        for _ in 0..20 {
            let mut jtj = Matrix3::zeros();
            let mut jtr = Vec3::zeros();
            for &(j, r) in &zs {
                let d = x + cfg.sensor.tag_offset - cfg.sensor.anchors[j];
                let e = d.normalize();
                jtj += e * e.transpose();
                jtr += e * (r - d.norm());
            }
            x += jtj.try_inverse().unwrap() * jtr;
        }
        let est = s.position();
        assert!((est - x).norm() < 3.0 * sigma / (n as f64).sqrt(), "filter {est:?} vs batch {x:?}");
        sq_filter += (est - truth).component_mul(&(est - truth));
    }
    let rmse = (sq_filter / trials as f64).map(f64::sqrt);
    assert!(rmse.max() < 3.0 * sigma / (n as f64).sqrt(), "{rmse:?}");
}

#[test]
fn covariances_stay_psd_under_random_cycles() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = MekfConfig::default();
    let mut s = MekfState::new(
        stack(&Vec3::new(0.5, 0.5, 0.5), &Vec3::zeros()),
        0.5,
        0.05,
        UnitQuaternion::identity(),
        0.05,
    );
    let mut worst = f64::INFINITY;
    for i in 0..100_000 {
        if rng.random_bool(0.3) {
            let dt = rng.random_range(0.01..1.0);
            let w = Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1));
            s = predict(&s, &Vec3::zeros(), &w, dt, &cfg);
        } else {
            let j = rng.random_range(0..4);
            let r = (s.position() - cfg.sensor.anchors[j]).norm() + rng.random_range(-0.1..0.1);
            s = update_range(&s, &RangeMeasurement { anchor_id: j, range: r }, &cfg).unwrap().state;
        }
        if i % 7 == 0 {
            worst = worst.min(s.trans_cov.symmetric_eigenvalues().min());
            worst = worst.min(s.att_cov.symmetric_eigenvalues().min());
        }
        assert_eq!(s.trans_cov, s.trans_cov.transpose());
    }
    assert!(worst >= -1e-10, "min eigenvalue {worst}");
}

#[test]
fn buffer_is_monotone_in_each_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let mut s = MekfState::new(stack(&Vec3::zeros(), &Vec3::zeros()), 0.1, 0.1, UnitQuaternion::identity(), 0.1);
        for i in 0..6 {
            s.trans_cov[(i, i)] = rng.random_range(0.0..1.0);
        }
        let xi = rng.random_range(0.1..3.0);
        let base = uncertainty_buffer(&s, xi);
        let i = rng.random_range(0..6);
        s.trans_cov[(i, i)] += rng.random_range(0.0..1.0);
        assert!(uncertainty_buffer(&s, xi) >= base);
    }
}

#[test]
fn translational_nees_is_consistent() {
    let runs = 50;
    let nees = common::nees::ensemble_nees(runs, 200, 0.5, 77);
    let chi = ChiSquared::new(6.0 * runs as f64).unwrap();
    let lo = chi.inverse_cdf(0.025) / runs as f64;
    let hi = chi.inverse_cdf(0.975) / runs as f64;
    let inside = nees.iter().filter(|v| **v >= lo && **v <= hi).count();
    let frac = inside as f64 / nees.len() as f64;
    assert!(frac >= 0.9, "only {:.1}% of ticks inside [{lo:.3}, {hi:.3}]", 100.0 * frac);
}
