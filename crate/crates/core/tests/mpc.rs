use nalgebra::DVector;
use proptest::prelude::*;
use proxsafe::dynamics::{discretize, State6};
use proxsafe::mpc::{build_prediction, MpcTracker, MpcWeights};

const U_MAX: f64 = 0.025;

/// Coarse-to-fine grid minimum of the tracking cost over the input box.
fn grid_minimum(tr: &MpcTracker, x: &State6, y_ref: &DVector<f64>) -> (DVector<f64>, f64) {
    let mut center: DVector<f64> = DVector::zeros(3);
    let mut half = U_MAX;
    let mut best = (center.clone(), f64::INFINITY);
    for _ in 0..8 {
        let n = 20;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let u = DVector::from_fn(3, |r, _| {
                        let idx = [i, j, k][r] as f64;
                        (center[r] - half + 2.0 * half * idx / n as f64).clamp(-U_MAX, U_MAX)
                    });
                    let c = tr.cost(x, y_ref, &u, 0.0);
                    if c < best.1 {
                        best = (u, c);
                    }
                }
            }
        }
        center = best.0.clone();
        half *= 0.2;
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn one_step_plan_matches_grid_search(
        x in prop::array::uniform6(-0.2..0.2f64),
        y in prop::array::uniform6(-0.2..0.2f64),
        w_u in prop::sample::select(vec![0.1, 1.0, 100.0]),
    ) {
        let pm = build_prediction(&discretize(1.0, 1.0).unwrap(), 1).unwrap();
        let tr = MpcTracker::new(pm, MpcWeights::diagonal(1.0, 10.0, w_u, 1e3).with_u_box(U_MAX)).unwrap();
        let x = State6::from_row_slice(&x);
        let y_ref = DVector::from_row_slice(&y);
        let sol = tr.solve(&x, &y_ref).unwrap();
        prop_assert!(!sol.fault);
        let (u_grid, c_grid) = grid_minimum(&tr, &x, &y_ref);
        prop_assert!(sol.objective <= c_grid + 1e-9 * c_grid.abs().max(1.0));
        prop_assert!((&sol.u_sequence - &u_grid).amax() < 1e-5);
        prop_assert!(sol.u_sequence.amax() <= U_MAX + 1e-9);
    }
}

#[test]
fn longer_horizon_is_never_worse_than_its_own_truncation() {
    let x = State6::from_row_slice(&[0.3, -0.2, 0.1, 0.0, 0.01, 0.0]);
    for p in [2, 5, 10] {
        let pm = build_prediction(&discretize(1.0, 1.0).unwrap(), p).unwrap();
        let tr = MpcTracker::new(pm, MpcWeights::diagonal(1.0, 10.0, 100.0, 1e3).with_u_box(U_MAX)).unwrap();
        let y_ref = DVector::zeros(6 * p);
        let sol = tr.solve(&x, &y_ref).unwrap();
        let zero = tr.cost(&x, &y_ref, &DVector::zeros(3 * p), 0.0);
        assert!(sol.objective <= zero + 1e-12);
        assert!(sol.u_sequence.amax() <= U_MAX + 1e-9);
    }
}
