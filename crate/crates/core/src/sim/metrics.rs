//! End-of-run summaries of a [`SimLog`].

use crate::dynamics::{position, velocity};

use super::records::{Branch, SimLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImpulseNorm {
    /// Sum of per-axis magnitudes, matching one-sided nozzles.
    #[default]
    L1,
    L2,
}

/// Stall rule: every agent slower than `speed` for longer than `duration`
/// while farther than `goal_distance` from its goal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadlockRule {
    pub speed: f64,
    pub duration: f64,
    pub goal_distance: f64,
}

impl Default for DeadlockRule {
    fn default() -> Self {
        Self {
            speed: 1e-3,
            duration: 10.0,
            goal_distance: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentMetrics {
    pub impulse: f64,
    /// Solver wall-time summed over the run, s.
    pub wall_total: f64,
    pub wall_average: f64,
    /// Average over ticks where a safety branch acted; zero if none did.
    pub wall_active_average: f64,
    pub active_ticks: usize,
    pub min_h_koz: f64,
    pub min_h_ca: f64,
    pub min_h1: f64,
    pub min_s_target: f64,
    pub final_goal_distance: f64,
    pub faults: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub ticks: usize,
    pub agents: Vec<AgentMetrics>,
    /// Fraction of agent-ticks in the none, CBF and DCOL branches.
    pub occupancy: [f64; 3],
    /// Longest simultaneous stall, s.
    pub longest_stall: f64,
    pub deadlock: bool,
}

impl Metrics {
    pub fn total_impulse(&self) -> f64 {
        self.agents.iter().map(|a| a.impulse).sum()
    }

    /// Mean over agents of the active-tick average solve time.
    pub fn active_average(&self) -> f64 {
        self.agents.iter().map(|a| a.wall_active_average).sum::<f64>() / self.agents.len().max(1) as f64
    }
}

pub fn impulse(log: &SimLog, agent: usize, norm: ImpulseNorm) -> f64 {
    log.agent(agent)
        .map(|r| match norm {
            ImpulseNorm::L1 => r.u_safe.abs().sum(),
            ImpulseNorm::L2 => r.u_safe.norm(),
        })
        .sum::<f64>()
        * log.dt
}

pub fn compute_metrics(log: &SimLog, norm: ImpulseNorm) -> Metrics {
    compute_metrics_with(log, norm, DeadlockRule::default())
}

pub fn compute_metrics_with(log: &SimLog, norm: ImpulseNorm, rule: DeadlockRule) -> Metrics {
    let n = log.n_agents;
    let ticks = log.ticks();
    let mut agents = Vec::with_capacity(n);
    for i in 0..n {
        let mut m = AgentMetrics {
            impulse: impulse(log, i, norm),
            wall_total: 0.0,
            wall_average: 0.0,
            wall_active_average: 0.0,
            active_ticks: 0,
            min_h_koz: f64::INFINITY,
            min_h_ca: f64::INFINITY,
            min_h1: f64::INFINITY,
            min_s_target: f64::INFINITY,
            final_goal_distance: if log.final_states.is_empty() {
                f64::NAN
            } else {
                log.final_goal_distance(i)
            },
            faults: 0,
        };
        let mut active_time = 0.0;
        for (r, tm) in log.records.iter().zip(&log.timing).filter(|(r, _)| r.agent == i) {
            m.wall_total += tm.total();
            if r.branch != Branch::None {
                m.active_ticks += 1;
                active_time += tm.total();
            }
            m.min_h_koz = m.min_h_koz.min(r.h_koz_true);
            m.min_h_ca = m.min_h_ca.min(r.h_ca_true);
            m.min_h1 = m.min_h1.min(r.h1_true);
            m.min_s_target = m.min_s_target.min(r.s_target);
            m.faults += usize::from(r.fault);
        }
        if ticks > 0 {
            m.wall_average = m.wall_total / ticks as f64;
        }
        if m.active_ticks > 0 {
            m.wall_active_average = active_time / m.active_ticks as f64;
        }
        agents.push(m);
    }
    let mut occupancy = [0.0; 3];
    for r in &log.records {
        occupancy[match r.branch {
            Branch::None => 0,
            Branch::Cbf => 1,
            Branch::Dcol => 2,
        }] += 1.0;
    }
    if !log.records.is_empty() {
        for o in &mut occupancy {
            *o /= log.records.len() as f64;
        }
    }
    let longest_stall = longest_stall(log, rule);
    Metrics {
        ticks,
        agents,
        occupancy,
        longest_stall,
        deadlock: longest_stall > rule.duration,
    }
}

/// Longest run of ticks where every agent is stalled, in seconds.
pub fn longest_stall(log: &SimLog, rule: DeadlockRule) -> f64 {
    let mut best = 0usize;
    let mut run = 0usize;
    for k in 0..log.ticks() {
        let stalled = (0..log.n_agents).all(|i| {
            let r = log.record(k, i);
            velocity(&r.truth).norm() < rule.speed && r.goal_distance > rule.goal_distance
        });
        run = if stalled { run + 1 } else { 0 };
        best = best.max(run);
    }
    best as f64 * log.dt
}

/// Longest stretch, in seconds, during which agent `i` stays within
/// `radius` of agent `j`'s reference.
pub fn tracking_other_reference(log: &SimLog, i: usize, j: usize, radius: f64) -> f64 {
    let mut best = 0usize;
    let mut run = 0usize;
    for k in 0..log.ticks() {
        let d = (position(&log.record(k, i).truth) - position(&log.record(k, j).reference)).norm();
        run = if d < radius { run + 1 } else { 0 };
        best = best.max(run);
    }
    best as f64 * log.dt
}

/// Longest such stretch over all ordered pairs, with the pair.
pub fn dominance(log: &SimLog, radius: f64) -> (f64, usize, usize) {
    let mut best = (0.0, 0, 0);
    for i in 0..log.n_agents {
        for j in 0..log.n_agents {
            if i != j {
                let d = tracking_other_reference(log, i, j, radius);
                if d > best.0 {
                    best = (d, i, j);
                }
            }
        }
    }
    best
}
