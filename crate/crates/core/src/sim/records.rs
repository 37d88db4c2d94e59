use std::io::Write;

use crate::dynamics::{position, velocity, State6, Vec3};

use super::scenario::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    None,
    Cbf,
    Dcol,
}

impl Branch {
    pub fn name(&self) -> &'static str {
        match self {
            Branch::None => "none",
            Branch::Cbf => "cbf",
            Branch::Dcol => "dcol",
        }
    }
}

/// One agent at one tick. Safety values are evaluated before the control of
/// that tick is applied. Missing constraints read `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: usize,
    pub t: f64,
    pub agent: usize,
    pub truth: State6,
    pub estimate: State6,
    /// Inertial reference state.
    pub reference: State6,
    pub goal_distance: f64,
    pub u_p: Vec3,
    /// Control actually commanded.
    pub u_safe: Vec3,
    pub branch: Branch,
    pub h_koz_true: f64,
    pub h_koz_est: f64,
    /// Smallest pairwise value involving this agent.
    pub h_ca_true: f64,
    pub h_ca_est: f64,
    /// Smallest braking-distance value over this agent's pairs.
    pub h1_true: f64,
    /// Collision scaling against the target hull.
    pub s_target: f64,
    /// Smallest collision scaling against another agent.
    pub s_agent: f64,
    /// Slack of the QP whose output was used.
    pub epsilon: f64,
    /// Trace of the position covariance; zero without an estimator.
    pub cov_trace: f64,
    pub eta: f64,
    /// Horizon steps flagged by the collision-scaling check.
    pub flagged: usize,
    /// Whether the first horizon step was flagged.
    pub first_step_flagged: bool,
    pub fault: bool,
}

/// Wall-clock time spent in solver calls, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TickTiming {
    pub tracking: f64,
    pub safety: f64,
}

impl TickTiming {
    pub fn total(&self) -> f64 {
        self.tracking + self.safety
    }
}

/// Tick-major records: `records[tick * n_agents + agent]`. Timings are kept
/// apart because they are the only nondeterministic content.
#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub scenario: String,
    pub mode: Mode,
    pub dt: f64,
    pub n_agents: usize,
    pub records: Vec<TickRecord>,
    pub timing: Vec<TickTiming>,
    /// Truth after the last tick.
    pub final_states: Vec<State6>,
    /// Goal positions at the final time, inertial.
    pub final_goals: Vec<Vec3>,
}

impl SimLog {
    pub fn ticks(&self) -> usize {
        self.records.len().checked_div(self.n_agents).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, tick: usize, agent: usize) -> &TickRecord {
        &self.records[tick * self.n_agents + agent]
    }

    pub fn agent(&self, agent: usize) -> impl Iterator<Item = &TickRecord> {
        self.records.iter().filter(move |r| r.agent == agent)
    }

    pub fn final_goal_distance(&self, agent: usize) -> f64 {
        (position(&self.final_states[agent]) - self.final_goals[agent]).norm()
    }

    pub const CSV_HEADER: [&'static str; 37] = [
        "tick",
        "t",
        "agent",
        "x",
        "y",
        "z",
        "vx",
        "vy",
        "vz",
        "x_est",
        "y_est",
        "z_est",
        "x_ref",
        "y_ref",
        "z_ref",
        "goal_distance",
        "up_x",
        "up_y",
        "up_z",
        "u_x",
        "u_y",
        "u_z",
        "branch",
        "h_koz",
        "h_koz_est",
        "h_ca",
        "h_ca_est",
        "h1",
        "s_target",
        "s_agent",
        "epsilon",
        "cov_trace",
        "eta",
        "flagged",
        "fault",
        "t_tracking",
        "t_safety",
    ];

    /// One row per tick per agent with the header in [`SimLog::CSV_HEADER`].
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(Self::CSV_HEADER)?;
        for (r, tm) in self.records.iter().zip(&self.timing) {
            let p = position(&r.truth);
            let v = velocity(&r.truth);
            let pe = position(&r.estimate);
            let pr = position(&r.reference);
            let mut row: Vec<String> = vec![r.tick.to_string(), fmt(r.t), r.agent.to_string()];
            row.extend([p.x, p.y, p.z, v.x, v.y, v.z, pe.x, pe.y, pe.z, pr.x, pr.y, pr.z, r.goal_distance].map(fmt));
            row.extend([r.u_p.x, r.u_p.y, r.u_p.z, r.u_safe.x, r.u_safe.y, r.u_safe.z].map(fmt));
            row.push(r.branch.name().to_string());
            row.extend(
                [
                    r.h_koz_true,
                    r.h_koz_est,
                    r.h_ca_true,
                    r.h_ca_est,
                    r.h1_true,
                    r.s_target,
                    r.s_agent,
                    r.epsilon,
                    r.cov_trace,
                    r.eta,
                ]
                .map(fmt),
            );
            row.push(r.flagged.to_string());
            row.push(u8::from(r.fault).to_string());
            row.push(fmt(tm.tracking));
            row.push(fmt(tm.safety));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.9e}")
    } else {
        format!("{v}")
    }
}
