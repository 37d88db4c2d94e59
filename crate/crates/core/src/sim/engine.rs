use std::time::Instant;

use nalgebra::{DVector, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cbf::{
    braking_rows, ca_row, eval_h1, eval_hca, eval_hkoz, is_active, koz_row, safety_filter, InterAgentHocbf, KeepOutHocbf,
    PairwiseBrakingCbf, RowKind, SafetyRow, ACTIVE_TOL,
};
use crate::dcol::{approach_side, detect_against, min_scaling, resolve_avoidance, rso_hull_over_horizon, FlaggedTick, Polytope};
use crate::dynamics::{discretize, position, velocity, DoubleIntegrator, State6, Vec3};
use crate::estimation::{fold_attitude, predict, uncertainty_buffer, update_range, MekfState, RangeMeasurement};
use crate::mpc::{build_prediction, MpcTracker, MpcWeights};

use super::records::{Branch, SimLog, TickRecord, TickTiming};
use super::scenario::{Mode, Scenario, SimError};

// Independent random streams of one run.
const STREAM_ACTUATION: u64 = 1;
const STREAM_RANGE: u64 = 2;
const STREAM_GYRO: u64 = 3;
const STREAM_INIT: u64 = 4;

struct Rngs {
    actuation: ChaCha8Rng,
    range: ChaCha8Rng,
    gyro: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn normal3(rng: &mut ChaCha8Rng, sigma: f64) -> Vec3 {
    Vec3::new(normal(rng), normal(rng), normal(rng)) * sigma
}

/// Everything that stays fixed during a run.
struct Setup<'a> {
    sc: &'a Scenario,
    model: DoubleIntegrator,
    tracker: MpcTracker,
    hull: Polytope,
    braking: PairwiseBrakingCbf,
    koz: Option<KeepOutHocbf>,
    ca: InterAgentHocbf,
}

impl<'a> Setup<'a> {
    fn new(sc: &'a Scenario) -> Result<Self, SimError> {
        let invalid = |e: String| SimError::Invalid(e);
        let model = discretize(sc.dt, sc.mass).map_err(|e| invalid(e.to_string()))?.with_u_max(sc.u_max);
        let c = &sc.controller;
        let pm = build_prediction(&model, c.horizon).map_err(|e| invalid(e.to_string()))?;
        let weights = MpcWeights::diagonal(c.w_pos, c.w_vel, c.w_u, c.rho).with_u_box(sc.u_max);
        let tracker = MpcTracker::new(pm, weights).map_err(|e| invalid(e.to_string()))?;
        let braking = PairwiseBrakingCbf::new(sc.side, sc.u_max, model.thrust_scale).map_err(|e| invalid(e.to_string()))?;
        let koz = match &sc.rso {
            Some(rso) => Some(KeepOutHocbf::new(rso.semi_axes, sc.side, c.koz_alphas).map_err(|e| invalid(e.to_string()))?),
            None => None,
        };
        Ok(Self {
            sc,
            model,
            tracker,
            hull: Polytope::cube(sc.side),
            braking,
            koz,
            ca: InterAgentHocbf::new(sc.side, c.ca_alphas),
        })
    }

    fn reference_window(&self, agent: usize, t: f64) -> DVector<f64> {
        let p = self.sc.controller.horizon;
        let mut y = DVector::zeros(6 * p);
        for k in 0..p {
            let r = self.sc.reference_at(agent, t + (k + 1) as f64 * self.sc.dt);
            y.rows_mut(6 * k, 6).copy_from(&r);
        }
        y
    }
}

/// Per-agent outcome of the safety layer for one tick.
struct Decision {
    u: Vec3,
    branch: Branch,
    epsilon: f64,
    flagged: usize,
    first_step_flagged: bool,
    fault: bool,
    safety_time: f64,
}

/// Runs the closed loop for `sc.duration` seconds.
pub fn run_scenario(sc: &Scenario) -> Result<SimLog, SimError> {
    sc.validate()?;
    let setup = Setup::new(sc)?;
    let n = sc.agents.len();
    let ticks = sc.ticks();
    let mut rngs = Rngs {
        actuation: stream(sc.seed, STREAM_ACTUATION),
        range: stream(sc.seed, STREAM_RANGE),
        gyro: stream(sc.seed, STREAM_GYRO),
    };
    let mut truth: Vec<State6> = sc.agents.iter().map(|a| a.initial).collect();
    let mut filters: Option<Vec<MekfState>> = sc.noise.estimator.as_ref().map(|e| {
        let mut init = stream(sc.seed, STREAM_INIT);
        truth
            .iter()
            .map(|x| {
                let mut mean = *x;
                for i in 0..3 {
                    mean[i] += e.init_pos_sigma * normal(&mut init);
                    mean[i + 3] += e.init_vel_sigma * normal(&mut init);
                }
                let q = UnitQuaternion::from_scaled_axis(normal3(&mut init, e.init_att_sigma));
                MekfState::new(mean, e.init_pos_sigma, e.init_vel_sigma, q, e.init_att_sigma)
            })
            .collect()
    });
    let mut last_u = vec![Vec3::zeros(); n];
    let mut records = Vec::with_capacity(ticks * n);
    let mut timing = Vec::with_capacity(ticks * n);

    for tick in 0..ticks {
        let t = tick as f64 * sc.dt;
        if let (Some(fs), Some(setup_e)) = (filters.as_mut(), sc.noise.estimator.as_ref()) {
            let cfg = &setup_e.mekf;
            for (i, f) in fs.iter_mut().enumerate() {
                if tick > 0 {
                    let gyro = normal3(&mut rngs.gyro, cfg.sensor.gyro_sigma / sc.dt.sqrt());
                    *f = predict(f, &setup.model.accel(&last_u[i]), &gyro, sc.dt, cfg);
                }
                // Agents do not rotate; the tag sits at its body offset.
                let tag = position(&truth[i]) + cfg.sensor.tag_offset;
                for (id, anchor) in cfg.sensor.anchors.iter().enumerate() {
                    let z = RangeMeasurement {
                        anchor_id: id,
                        range: (tag - anchor).norm() + cfg.sensor.range_sigma * normal(&mut rngs.range),
                    };
                    if let Ok(out) = update_range(f, &z, cfg) {
                        *f = out.state;
                    }
                }
                *f = fold_attitude(f);
            }
        }
        let est: Vec<State6> = match &filters {
            Some(fs) => fs.iter().map(|f| f.trans_mean).collect(),
            None => truth.clone(),
        };
        let eta: Vec<f64> = match &filters {
            Some(fs) => fs.iter().map(|f| uncertainty_buffer(f, sc.controller.buffer_xi)).collect(),
            None => vec![0.0; n],
        };

        let mut u_p = Vec::with_capacity(n);
        let mut plans = Vec::with_capacity(n);
        let mut windows = Vec::with_capacity(n);
        let mut track_time = Vec::with_capacity(n);
        for i in 0..n {
            let y_ref = setup.reference_window(i, t);
            let start = Instant::now();
            let sol = setup.tracker.solve(&est[i], &y_ref).expect("reference window sized by the horizon");
            track_time.push(start.elapsed().as_secs_f64());
            u_p.push(sol.first());
            plans.push(sol);
            windows.push(y_ref);
        }

        let decisions = match sc.mode {
            Mode::DcolOnly => (0..n)
                .map(|i| dcol_decision(&setup, i, t, &est, &plans[i].u_sequence, &windows[i], true))
                .collect(),
            Mode::CbfOnly => cbf_only(&setup, t, &est, &eta, &u_p),
            Mode::Hybrid => hybrid(&setup, t, &est, &eta, &u_p, &plans, &windows),
        };
        let decisions: Vec<Decision> = decisions;

        for i in 0..n {
            let d = &decisions[i];
            let eps = if d.branch == Branch::Dcol {
                d.epsilon
            } else {
                plans[i].epsilon.max(d.epsilon)
            };
            records.push(record(
                &setup,
                tick,
                t,
                i,
                &truth,
                &est,
                &eta,
                &filters,
                u_p[i],
                d,
                eps,
                plans[i].fault,
            ));
            timing.push(TickTiming {
                tracking: track_time[i],
                safety: d.safety_time,
            });
        }
        for i in 0..n {
            let u = decisions[i].u;
            let w = if sc.noise.actuation_sigma > 0.0 {
                normal3(&mut rngs.actuation, sc.noise.actuation_sigma)
            } else {
                Vec3::zeros()
            };
            truth[i] = setup.model.step(&truth[i], &(u + w));
            last_u[i] = u;
        }
    }
    let t_end = ticks as f64 * sc.dt;
    Ok(SimLog {
        scenario: sc.name.clone(),
        mode: sc.mode,
        dt: sc.dt,
        n_agents: n,
        records,
        timing,
        final_states: truth,
        final_goals: (0..n).map(|i| sc.goal_at(i, t_end)).collect(),
    })
}

#[allow(clippy::too_many_arguments)]
fn record(
    setup: &Setup,
    tick: usize,
    t: f64,
    i: usize,
    truth: &[State6],
    est: &[State6],
    eta: &[f64],
    filters: &Option<Vec<MekfState>>,
    u_p: Vec3,
    d: &Decision,
    epsilon: f64,
    tracking_fault: bool,
) -> TickRecord {
    let sc = setup.sc;
    let p = position(&truth[i]);
    let pe = position(&est[i]);
    let (mut h_koz_true, mut h_koz_est, mut s_target) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    if let (Some(rso), Some(koz)) = (&sc.rso, &setup.koz) {
        h_koz_true = eval_hkoz(&rso.to_rso_frame(&p, t), koz);
        h_koz_est = eval_hkoz(&rso.to_rso_frame(&pe, t), &koz.with_eta(eta[i]));
        let hull = rso.hull.clone().with_pose(rso.attitude_at(t), Vec3::zeros());
        if let Ok(r) = min_scaling(&setup.hull.at(p), &hull) {
            s_target = r.s;
        }
    }
    let (mut h_ca_true, mut h_ca_est, mut h1_true, mut s_agent) = (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for j in 0..truth.len() {
        if j == i {
            continue;
        }
        let pj = position(&truth[j]);
        h_ca_true = h_ca_true.min(eval_hca(&p, &pj, &setup.ca));
        let ca_est = InterAgentHocbf {
            eta_i: eta[i],
            eta_j: eta[j],
            ..setup.ca
        };
        h_ca_est = h_ca_est.min(eval_hca(&pe, &position(&est[j]), &ca_est));
        h1_true = h1_true.min(eval_h1(&p, &velocity(&truth[i]), &pj, &velocity(&truth[j]), &setup.braking).h);
        if let Ok(r) = min_scaling(&setup.hull.at(p), &setup.hull.at(pj)) {
            s_agent = s_agent.min(r.s);
        }
    }
    let cov_trace = filters
        .as_ref()
        .map(|fs| (0..3).map(|k| fs[i].trans_cov[(k, k)]).sum())
        .unwrap_or(0.0);
    TickRecord {
        tick,
        t,
        agent: i,
        truth: truth[i],
        estimate: est[i],
        reference: sc.reference_at(i, t),
        goal_distance: (p - sc.goal_at(i, t)).norm(),
        u_p,
        u_safe: d.u,
        branch: d.branch,
        h_koz_true,
        h_koz_est,
        h_ca_true,
        h_ca_est,
        h1_true,
        s_target,
        s_agent,
        epsilon,
        cov_trace,
        eta: eta[i],
        flagged: d.flagged,
        first_step_flagged: d.first_step_flagged,
        fault: d.fault || tracking_fault,
    }
}

/// Collision-scaling check of agent `i`'s nominal plan against the target
/// (swept over the horizon) and, when `agents` is set, against every other
/// agent held at its current position; re-solves if anything is flagged,
/// up to the configured number of passes. A failed re-solve keeps the nominal control.
fn dcol_decision(setup: &Setup, i: usize, t: f64, est: &[State6], plan: &DVector<f64>, y_ref: &DVector<f64>, agents: bool) -> Decision {
    let sc = setup.sc;
    let c = &sc.controller;
    let start = Instant::now();
    let (flagged, mut fault) = dcol_flags(setup, i, t, est, plan, agents);
    let first = Vec3::new(plan[0], plan[1], plan[2]);
    if flagged.is_empty() {
        return Decision {
            u: first,
            branch: Branch::None,
            epsilon: 0.0,
            flagged: 0,
            first_step_flagged: false,
            fault,
            safety_time: start.elapsed().as_secs_f64(),
        };
    }
    let first_step_flagged = flagged.iter().any(|f| f.step == 1);
    let n_flagged = flagged.len();
    let mut out = resolve_avoidance(&setup.tracker, &est[i], y_ref, plan, &flagged, c.s_thr, sc.u_max, c.dcol_slack);
    for _ in 1..c.dcol_iterations {
        if out.fault {
            break;
        }
        let (more, f) = dcol_flags(setup, i, t, est, &out.u_sequence, agents);
        fault |= f;
        if more.is_empty() {
            break;
        }
        let next = resolve_avoidance(
            &setup.tracker,
            &est[i],
            y_ref,
            &out.u_sequence,
            &more,
            c.s_thr,
            sc.u_max,
            c.dcol_slack,
        );
        if next.fault {
            break;
        }
        out = next;
    }
    Decision {
        u: Vec3::new(out.u_sequence[0], out.u_sequence[1], out.u_sequence[2]),
        branch: Branch::Dcol,
        epsilon: out.epsilon,
        flagged: n_flagged,
        first_step_flagged,
        fault: fault || out.fault,
        safety_time: start.elapsed().as_secs_f64(),
    }
}

fn dcol_flags(setup: &Setup, i: usize, t: f64, est: &[State6], plan: &DVector<f64>, agents: bool) -> (Vec<FlaggedTick>, bool) {
    let sc = setup.sc;
    let c = &sc.controller;
    let pm = setup.tracker.prediction();
    let mut flagged: Vec<FlaggedTick> = Vec::new();
    let mut fault = false;
    if let Some(rso) = &sc.rso {
        let hulls = rso_hull_over_horizon(rso, t, sc.dt, c.horizon);
        match detect_against(plan, &est[i], pm, &setup.hull, &hulls, c.s_thr) {
            Ok(f) if c.dcol_same_side => flagged.extend(approach_side(f)),
            Ok(f) => flagged.extend(f),
            Err(e) => {
                log::warn!("scaling check against the target failed: {e}");
                fault = true;
            }
        }
    }
    if agents {
        for (j, xj) in est.iter().enumerate() {
            if j == i {
                continue;
            }
            let other = vec![setup.hull.at(position(xj)); c.horizon];
            match detect_against(plan, &est[i], pm, &setup.hull, &other, c.s_thr) {
                Ok(f) if c.dcol_same_side => flagged.extend(approach_side(f)),
                Ok(f) => flagged.extend(f),
                Err(e) => {
                    log::warn!("scaling check against agent {j} failed: {e}");
                    fault = true;
                }
            }
        }
    }
    (flagged, fault)
}

fn koz_rows(setup: &Setup, t: f64, est: &[State6], eta: &[f64]) -> Vec<SafetyRow> {
    let (Some(rso), Some(koz)) = (&setup.sc.rso, &setup.koz) else {
        return Vec::new();
    };
    let n = est.len();
    (0..n)
        .filter_map(
            |i| match koz_row(i, n, &est[i], rso, t, &koz.with_eta(eta[i]), setup.model.thrust_scale) {
                Ok((row, _)) => Some(row),
                Err(e) => {
                    log::warn!("keep-out row for agent {i} skipped: {e}");
                    None
                }
            },
        )
        .collect()
}

fn ca_rows(setup: &Setup, est: &[State6], eta: &[f64]) -> Vec<SafetyRow> {
    let n = est.len();
    let mut rows = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let ca = InterAgentHocbf {
                eta_i: eta[i],
                eta_j: eta[j],
                ..setup.ca
            };
            match ca_row(i, j, n, &est[i], &est[j], &ca, setup.model.thrust_scale) {
                Ok((row, _)) => rows.push(row),
                Err(e) => log::warn!("pair ({i}, {j}) row skipped: {e}"),
            }
        }
    }
    rows
}

fn cbf_only(setup: &Setup, t: f64, est: &[State6], eta: &[f64], u_p: &[Vec3]) -> Vec<Decision> {
    let sc = setup.sc;
    let start = Instant::now();
    let braking = PairwiseBrakingCbf {
        d_s: setup.braking.d_s + 2.0 * eta.iter().copied().fold(0.0, f64::max),
        ..setup.braking
    };
    let mut rows = braking_rows(est, &braking, &sc.controller.braking_alpha);
    rows.extend(koz_rows(setup, t, est, eta));
    let vel: Vec<Vec3> = est.iter().map(velocity).collect();
    let out = safety_filter(u_p, &rows, sc.u_max, &vel);
    let active = rows.iter().zip(&out.duals).any(|(r, d)| is_active(r, &out.u_safe, *d, ACTIVE_TOL));
    let share = start.elapsed().as_secs_f64() / est.len() as f64;
    out.u_safe
        .iter()
        .map(|u| Decision {
            u: *u,
            branch: if active || out.fallback { Branch::Cbf } else { Branch::None },
            epsilon: 0.0,
            flagged: 0,
            first_step_flagged: false,
            fault: out.fallback,
            safety_time: share,
        })
        .collect()
}

fn hybrid(
    setup: &Setup,
    t: f64,
    est: &[State6],
    eta: &[f64],
    u_p: &[Vec3],
    plans: &[crate::mpc::MpcSolution],
    windows: &[DVector<f64>],
) -> Vec<Decision> {
    let sc = setup.sc;
    let n = est.len();
    let start = Instant::now();
    let mut rows = koz_rows(setup, t, est, eta);
    rows.extend(ca_rows(setup, est, eta));
    let vel: Vec<Vec3> = est.iter().map(velocity).collect();
    let out = safety_filter(u_p, &rows, sc.u_max, &vel);
    let ca_active = rows
        .iter()
        .zip(&out.duals)
        .any(|(r, d)| matches!(r.kind, RowKind::InterAgent { .. }) && is_active(r, &out.u_safe, *d, ACTIVE_TOL));
    let share = start.elapsed().as_secs_f64() / n as f64;
    if ca_active || out.fallback {
        return out
            .u_safe
            .iter()
            .map(|u| Decision {
                u: *u,
                branch: Branch::Cbf,
                epsilon: 0.0,
                flagged: 0,
                first_step_flagged: false,
                fault: out.fallback,
                safety_time: share,
            })
            .collect();
    }
    (0..n)
        .map(|i| {
            let mut d = dcol_decision(setup, i, t, est, &plans[i].u_sequence, &windows[i], false);
            d.safety_time += share;
            d
        })
        .collect()
}
