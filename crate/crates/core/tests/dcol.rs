mod common;

use nalgebra::{Matrix3, UnitQuaternion};
use proptest::prelude::*;
use proxsafe::dcol::{min_scaling, Polytope};
use proxsafe::dynamics::Vec3;

#[derive(Debug, Clone)]
struct Obb {
    rot: Matrix3<f64>,
    center: Vec3,
    half: Vec3,
}

impl Obb {
    fn polytope(&self) -> Polytope {
        Polytope::cuboid(self.half * 2.0).with_pose(UnitQuaternion::from_matrix(&self.rot), self.center)
    }

    fn radius_along(&self, axis: &Vec3, scale: f64) -> f64 {
        (0..3).map(|k| scale * self.half[k] * self.rot.column(k).dot(axis).abs()).sum()
    }
}

/// Separating-axis test for two boxes scaled about their own centers.
fn separated(a: &Obb, b: &Obb, scale: f64) -> bool {
    let mut axes = Vec::with_capacity(15);
    for k in 0..3 {
        axes.push(a.rot.column(k).into_owned());
        axes.push(b.rot.column(k).into_owned());
    }
    for i in 0..3 {
        for j in 0..3 {
            let c = a.rot.column(i).cross(&b.rot.column(j));
            if c.norm() > 1e-9 {
                axes.push(c.normalize());
            }
        }
    }
    let d = b.center - a.center;
    axes.iter()
        .any(|ax| d.dot(ax).abs() > a.radius_along(ax, scale) + b.radius_along(ax, scale))
}

fn rot(v: [f64; 3]) -> Matrix3<f64> {
    UnitQuaternion::from_scaled_axis(Vec3::from(v)).to_rotation_matrix().into_inner()
}

fn arb_box() -> impl Strategy<Value = Obb> {
    (
        prop::array::uniform3(-3.0..3.0f64),
        prop::array::uniform3(-2.0..2.0f64),
        prop::array::uniform3(0.05..1.0f64),
    )
        .prop_map(|(r, c, h)| Obb {
            rot: rot(r),
            center: Vec3::from(c),
            half: Vec3::from(h),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scaling_agrees_with_separating_axes(a in arb_box(), b in arb_box()) {
        let r = min_scaling(&a.polytope(), &b.polytope()).unwrap();
        prop_assume!(r.s > 1e-3);
        prop_assert!(separated(&a, &b, r.s * (1.0 - 1e-6)));
        prop_assert!(!separated(&a, &b, r.s * (1.0 + 1e-6)));
        prop_assert!(a.polytope().contains(&r.contact_point, r.s * (1.0 + 1e-8)));
        prop_assert!(b.polytope().contains(&r.contact_point, r.s * (1.0 + 1e-8)));
    }

    #[test]
    fn scaling_is_symmetric(a in arb_box(), b in arb_box()) {
        let ab = min_scaling(&a.polytope(), &b.polytope()).unwrap().s;
        let ba = min_scaling(&b.polytope(), &a.polytope()).unwrap().s;
        prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
    }

    #[test]
    fn scaling_is_invariant_under_rigid_motion(a in arb_box(), b in arb_box(), r in prop::array::uniform3(-3.0..3.0f64), t in prop::array::uniform3(-5.0..5.0f64)) {
        let q = rot(r);
        let t = Vec3::from(t);
        let mv = |o: &Obb| Obb { rot: q * o.rot, center: q * o.center + t, half: o.half };
        let before = min_scaling(&a.polytope(), &b.polytope()).unwrap();
        let after = min_scaling(&mv(&a).polytope(), &mv(&b).polytope()).unwrap();
        prop_assert!((before.s - after.s).abs() <= 1e-8 * before.s.max(1.0));
        if !before.degenerate && !after.degenerate {
            prop_assert!((q * before.grad_s_center - after.grad_s_center).amax() <= 1e-6 * before.grad_s_center.amax().max(1.0));
        }
    }

    #[test]
    fn axis_aligned_cubes_scale_by_chebyshev_distance(c in prop::array::uniform3(-1.0..1.0f64), side in 0.05..0.5f64) {
        let d = Vec3::from(c);
        prop_assume!(d.amax() > 1e-3);
        let r = min_scaling(&Polytope::cube(side), &Polytope::cube(side).at(d)).unwrap();
        prop_assert!((r.s - d.amax() / side).abs() <= 1e-9 * r.s.max(1.0));
    }
}

#[test]
fn touching_cubes_sit_at_one() {
    let r = min_scaling(&Polytope::cube(0.1), &Polytope::cube(0.1).at(Vec3::new(0.1, 0.03, -0.02))).unwrap();
    assert!((r.s - 1.0).abs() < 1e-12);
}

#[test]
fn scaling_gradient_matches_central_differences() {
    let worst = common::fd::scaling_center(100, 3);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn degenerate_contacts_fall_back_to_differences() {
    // Parallel faces: the active set has more face pairs than the LP needs.
    let r = min_scaling(&Polytope::cube(1.0), &Polytope::cube(1.0).at(Vec3::new(3.0, 0.0, 0.0))).unwrap();
    assert!((r.grad_s_center - Vec3::new(-1.0, 0.0, 0.0)).amax() < 1e-6);
}
