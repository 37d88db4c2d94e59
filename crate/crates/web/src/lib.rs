//! WebAssembly bindings behind `www/index.html`. Everything is planar: the
//! page works in the `x`-`y` plane and `z` stays zero.

use nalgebra::UnitQuaternion;
use wasm_bindgen::prelude::*;

use proxsafe::cbf::{braking_rows, eval_h1, safety_filter, ClassKappa, PairwiseBrakingCbf};
use proxsafe::dcol::{min_scaling, Polytope};
use proxsafe::dynamics::{discretize, position, stack, thrust_scale, velocity, Vec3, DEFAULT_MASS, DEFAULT_SIDE, DEFAULT_THRUST_MAX};
use proxsafe::planner::{plan_relocation, rest_to_rest, PlannerConfig};

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn planar_box(cx: f64, cy: f64, w: f64, h: f64, yaw: f64) -> Polytope {
    Polytope::cuboid(Vec3::new(w, h, 1.0)).with_pose(UnitQuaternion::from_euler_angles(0.0, 0.0, yaw), Vec3::new(cx, cy, 0.0))
}

/// Minimum uniform scaling of two rectangles about their own centers.
/// Returns `[s, contact_x, contact_y, ds/dx, ds/dy, degenerate]`, the
/// gradient taken with respect to the first center.
#[wasm_bindgen]
pub fn box_scaling(
    ax: f64,
    ay: f64,
    aw: f64,
    ah: f64,
    ayaw: f64,
    bx: f64,
    by: f64,
    bw: f64,
    bh: f64,
    byaw: f64,
) -> Result<Vec<f64>, JsError> {
    let r = min_scaling(&planar_box(ax, ay, aw, ah, ayaw), &planar_box(bx, by, bw, bh, byaw)).map_err(js)?;
    Ok(vec![
        r.s,
        r.contact_point.x,
        r.contact_point.y,
        r.grad_s_center.x,
        r.grad_s_center.y,
        f64::from(u8::from(r.degenerate)),
    ])
}

#[wasm_bindgen]
pub struct Path {
    xs: Vec<f64>,
    ys: Vec<f64>,
    energy: f64,
    min_value: f64,
}

#[wasm_bindgen]
impl Path {
    #[wasm_bindgen(getter)]
    pub fn xs(&self) -> Vec<f64> {
        self.xs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn ys(&self) -> Vec<f64> {
        self.ys.clone()
    }

    /// `sum |u|^2 dt` of the planned forces.
    #[wasm_bindgen(getter)]
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Smallest keep-out function value along the path; negative inside.
    #[wasm_bindgen(getter)]
    pub fn min_value(&self) -> f64 {
        self.min_value
    }
}

/// Minimum-energy rest-to-rest transfer around an ellipse with semi-axes
/// `a`, `b`, padded by the agent's bounding radius.
#[wasm_bindgen]
pub fn plan_around(sx: f64, sy: f64, gx: f64, gy: f64, a: f64, b: f64, total_time: f64) -> Result<Path, JsError> {
    let cfg = PlannerConfig {
        total_time,
        semi_axes: Vec3::new(a, b, b.min(a)),
        ..PlannerConfig::default()
    };
    cfg.validate().map_err(js)?;
    let start = stack(&Vec3::new(sx, sy, 0.0), &Vec3::zeros());
    let goal = stack(&Vec3::new(gx, gy, 0.0), &Vec3::zeros());
    let r = plan_relocation(&start, &goal, &cfg).map_err(js)?;
    Ok(Path {
        xs: r.samples.iter().map(|s| s.position.x).collect(),
        ys: r.samples.iter().map(|s| s.position.y).collect(),
        energy: r.energy(),
        min_value: r.min_ellipsoid_value(&cfg.effective_axes()),
    })
}

#[wasm_bindgen]
pub struct Rollout {
    paths: [Vec<f64>; 4],
    h: Vec<f64>,
    filtered_ticks: usize,
}

#[wasm_bindgen]
impl Rollout {
    /// Interleaved `x, y` of the agent at index `agent`.
    pub fn path(&self, agent: usize) -> Vec<f64> {
        let (xs, ys) = (&self.paths[2 * agent], &self.paths[2 * agent + 1]);
        xs.iter().zip(ys).flat_map(|(x, y)| [*x, *y]).collect()
    }

    /// Braking-distance barrier value per tick.
    #[wasm_bindgen(getter)]
    pub fn h(&self) -> Vec<f64> {
        self.h.clone()
    }

    /// Ticks where the filter changed the tracking command.
    #[wasm_bindgen(getter)]
    pub fn filtered_ticks(&self) -> usize {
        self.filtered_ticks
    }
}

/// Two agents swapping ends of a `2 half_span` segment, the second path
/// offset sideways by `offset`, each tracking its reference with a PD law
/// through the pairwise braking filter with class-K gain `gain`.
#[wasm_bindgen]
pub fn filtered_crossing(half_span: f64, offset: f64, gain: f64, transfer_time: f64) -> Result<Rollout, JsError> {
    let cbf = PairwiseBrakingCbf::new(DEFAULT_SIDE, DEFAULT_THRUST_MAX, thrust_scale(DEFAULT_MASS)).map_err(js)?;
    let alpha = ClassKappa::linear(gain);
    alpha.validate().map_err(js)?;
    let plant = discretize(1.0, DEFAULT_MASS).map_err(js)?;
    let ends = [
        (Vec3::new(-half_span, 0.0, 0.0), Vec3::new(half_span, 0.0, 0.0)),
        (Vec3::new(half_span, offset, 0.0), Vec3::new(-half_span, offset, 0.0)),
    ];
    let refs = ends
        .iter()
        .map(|(s, g)| rest_to_rest(*s, *g, transfer_time, 1.0, DEFAULT_MASS))
        .collect::<Result<Vec<_>, _>>()
        .map_err(js)?;
    let mut x: Vec<_> = ends.iter().map(|(s, _)| stack(s, &Vec3::zeros())).collect();
    let ticks = (transfer_time * 1.25).round() as usize;
    let mut out = Rollout {
        paths: Default::default(),
        h: Vec::with_capacity(ticks),
        filtered_ticks: 0,
    };
    for k in 0..ticks {
        for (i, xi) in x.iter().enumerate() {
            out.paths[2 * i].push(xi[0]);
            out.paths[2 * i + 1].push(xi[1]);
        }
        let (p, v): (Vec<Vec3>, Vec<Vec3>) = x.iter().map(|s| (position(s), velocity(s))).unzip();
        out.h.push(eval_h1(&p[0], &v[0], &p[1], &v[1], &cbf).h);
        let u_p: Vec<Vec3> = x
            .iter()
            .zip(&refs)
            .map(|(s, r)| {
                let target = r.sample(k as f64);
                let ff = r.controls.get(k).copied().unwrap_or_else(Vec3::zeros);
                let fb = (position(&target) - position(s)) * 0.01 + (velocity(&target) - velocity(s)) * 0.2;
                (ff + fb / plant.thrust_scale).map(|c| c.clamp(-DEFAULT_THRUST_MAX, DEFAULT_THRUST_MAX))
            })
            .collect();
        let rows = braking_rows(&x, &cbf, &alpha);
        let f = safety_filter(&u_p, &rows, DEFAULT_THRUST_MAX, &v);
        if f.u_safe.iter().zip(&u_p).any(|(a, b)| (a - b).amax() > 1e-9) {
            out.filtered_ticks += 1;
        }
        for (xi, u) in x.iter_mut().zip(&f.u_safe) {
            *xi = plant.step(xi, u);
        }
    }
    Ok(out)
}
