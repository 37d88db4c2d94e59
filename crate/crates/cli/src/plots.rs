use std::f64::consts::TAU;

use proxsafe::dynamics::{position, Vec3};
use proxsafe::planner::ReferenceTrajectory;
use proxsafe::sim::{Mode, Scenario, SimLog, TickRecord};

use crate::svg::{Plot, Series};
use crate::{CliError, Context};

type Field = fn(&TickRecord) -> f64;

fn outline(axes: &Vec3) -> Series {
    let pts = (0..=120).map(|k| {
        let a = TAU * k as f64 / 120.0;
        (axes.x * a.cos(), axes.y * a.sin())
    });
    Series::new("keep-out", pts.collect()).dashed()
}

pub fn plan_trajectories(refs: &[ReferenceTrajectory], semi_axes: &Vec3) -> Plot {
    let mut p = Plot::new("Planned references, target frame", "x [m]", "y [m]");
    p.equal_aspect = true;
    for (i, r) in refs.iter().enumerate() {
        let pts = r.samples.iter().map(|s| (s.position.x, s.position.y)).collect();
        p = p.series(Series::new(format!("agent {}", i + 1), pts));
    }
    p.series(outline(semi_axes))
}

fn tag(mode: Mode, agent: usize, several: bool) -> String {
    if several {
        format!("{mode} a{}", agent + 1)
    } else {
        format!("a{}", agent + 1)
    }
}

/// Trajectories (target frame when there is a target), barrier histories
/// and the collision scaling against time.
pub fn write_run_plots(ctx: &Context, sc: &Scenario, logs: &[(Mode, &SimLog)]) -> Result<(), CliError> {
    let several = logs.len() > 1;
    let frame = |p: Vec3, t: f64| match &sc.rso {
        Some(rso) => rso.to_rso_frame(&p, t),
        None => p,
    };
    let title = if sc.rso.is_some() {
        "Trajectories, target frame"
    } else {
        "Trajectories"
    };
    let mut traj = Plot::new(title, "x [m]", "y [m]");
    traj.equal_aspect = true;
    for i in 0..sc.agents.len() {
        let r = logs[0].1.agent(i).map(|r| frame(position(&r.reference), r.t)).map(|p| (p.x, p.y));
        traj = traj.series(Series::new(format!("a{} reference", i + 1), r.collect()).dashed());
    }
    for (mode, log) in logs {
        for i in 0..log.n_agents {
            let pts = log.agent(i).map(|r| frame(position(&r.truth), r.t)).map(|p| (p.x, p.y));
            traj = traj.series(Series::new(tag(*mode, i, several), pts.collect()));
        }
    }
    if let Some(rso) = &sc.rso {
        traj = traj.series(outline(&rso.semi_axes));
    }
    ctx.write_text("trajectories.svg", &traj.render())?;

    let mut h = Plot::new("Barrier values", "t [s]", "h").guide(0.0, "h = 0");
    for (mode, log) in logs {
        for i in 0..log.n_agents {
            let rows: Vec<_> = log.agent(i).collect();
            let pick: [(&str, Field); 3] = [("h_koz", |r| r.h_koz_true), ("h_ca", |r| r.h_ca_true), ("h1", |r| r.h1_true)];
            for (name, f) in pick {
                if rows.iter().any(|r| f(r).is_finite()) {
                    let pts = rows.iter().map(|r| (r.t, f(r))).collect();
                    h = h.series(Series::new(format!("{} {name}", tag(*mode, i, several)), pts));
                }
            }
        }
    }
    ctx.write_text("h_history.svg", &h.render())?;

    let against = if sc.rso.is_some() { "target" } else { "nearest agent" };
    let mut s = Plot::new(&format!("Inflation factor against {against}"), "t [s]", "s")
        .guide(1.1, "1.10")
        .guide(1.0, "1.0");
    s.y_limits = Some((0.5, 2.5));
    for (mode, log) in logs {
        for i in 0..log.n_agents {
            let pts = log
                .agent(i)
                .map(|r| (r.t, if sc.rso.is_some() { r.s_target } else { r.s_agent }))
                .collect();
            s = s.series(Series::new(tag(*mode, i, several), pts));
        }
    }
    ctx.write_text("inflation.svg", &s.render())
}
