use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::cbf::ClassKappa;
use crate::dynamics::{position, RsoState, State6, Vec3, DEFAULT_MASS, DEFAULT_SIDE, DEFAULT_THRUST_MAX};
use crate::estimation::MekfConfig;
use crate::planner::ReferenceTrajectory;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("agents {0} and {1} start in conflict (h = {2:.4e})")]
    StartInConflict(usize, usize, f64),
    #[error("agent {0} starts inside the keep-out zone (h = {1:.4e})")]
    StartInsideKeepOut(usize, f64),
    #[error("run panicked: {0}")]
    Panic(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    DcolOnly,
    CbfOnly,
    Hybrid,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::DcolOnly => "dcol_only",
            Mode::CbfOnly => "cbf_only",
            Mode::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dcol_only" => Ok(Mode::DcolOnly),
            "cbf_only" => Ok(Mode::CbfOnly),
            "hybrid" => Ok(Mode::Hybrid),
            other => Err(format!("unknown mode '{other}' (expected dcol_only, cbf_only or hybrid)")),
        }
    }
}

/// Frame a reference trajectory is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefFrame {
    Inertial,
    /// Attached to the tumbling target.
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    /// Inertial `(p, v)` at `t = 0`.
    pub initial: State6,
    pub reference: ReferenceTrajectory,
    pub frame: RefFrame,
    /// The reference is sampled at `t - delay`.
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub horizon: usize,
    pub w_pos: f64,
    pub w_vel: f64,
    pub w_u: f64,
    /// Slack weight of the tracking and re-solve QPs.
    pub rho: f64,
    /// Inflation factor kept by the collision-scaling re-solve.
    pub s_thr: f64,
    /// Slack coefficient in the linearized scaling rows.
    pub dcol_slack: f64,
    /// Detect/re-solve passes per tick, each linearized about the last plan.
    pub dcol_iterations: usize,
    /// Keep only flagged steps on the near side of each obstacle.
    pub dcol_same_side: bool,
    pub braking_alpha: ClassKappa,
    pub koz_alphas: [ClassKappa; 2],
    pub ca_alphas: [ClassKappa; 2],
    /// Multiplier on the position standard deviation for the buffer.
    pub buffer_xi: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            w_pos: 1.0,
            w_vel: 10.0,
            w_u: 100.0,
            rho: 1e3,
            s_thr: 1.1,
            dcol_slack: 1.0,
            dcol_iterations: 1,
            dcol_same_side: true,
            braking_alpha: ClassKappa::linear(0.05),
            koz_alphas: [ClassKappa::linear(0.2), ClassKappa::linear(0.4)],
            ca_alphas: [ClassKappa::linear(0.2), ClassKappa::linear(0.4)],
            buffer_xi: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSetup {
    pub mekf: MekfConfig,
    pub init_pos_sigma: f64,
    pub init_vel_sigma: f64,
    pub init_att_sigma: f64,
}

impl Default for EstimatorSetup {
    fn default() -> Self {
        Self {
            mekf: MekfConfig {
                accel_noise: 1e-5,
                ..MekfConfig::default()
            },
            init_pos_sigma: 0.02,
            init_vel_sigma: 0.002,
            init_att_sigma: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseConfig {
    /// Per-axis force noise on the applied control, N.
    pub actuation_sigma: f64,
    /// `None` runs the controllers on the true state.
    pub estimator: Option<EstimatorSetup>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub agents: Vec<AgentSpec>,
    pub rso: Option<RsoState>,
    pub mode: Mode,
    pub seed: u64,
    pub duration: f64,
    pub dt: f64,
    pub mass: f64,
    /// Cube side of every agent, m.
    pub side: f64,
    /// Per-axis thrust limit, N.
    pub u_max: f64,
    pub controller: ControllerConfig,
    pub noise: NoiseConfig,
}

impl Scenario {
    pub fn new(name: &str, agents: Vec<AgentSpec>, rso: Option<RsoState>, mode: Mode) -> Self {
        Self {
            name: name.to_string(),
            agents,
            rso,
            mode,
            seed: 0,
            duration: 300.0,
            dt: 1.0,
            mass: DEFAULT_MASS,
            side: DEFAULT_SIDE,
            u_max: DEFAULT_THRUST_MAX,
            controller: ControllerConfig::default(),
            noise: NoiseConfig::default(),
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn ticks(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Bounding-sphere radius of an agent cube.
    pub fn r_s(&self) -> f64 {
        0.5 * 3f64.sqrt() * self.side
    }

    /// Reference state of `agent` at time `t`, inertial.
    pub fn reference_at(&self, agent: usize, t: f64) -> State6 {
        let a = &self.agents[agent];
        let x = a.reference.sample(t - a.delay);
        match (a.frame, &self.rso) {
            (RefFrame::Target, Some(rso)) => rso.state_from_rso_frame(&x, t),
            _ => x,
        }
    }

    /// Final reference position of `agent`, inertial at time `t`.
    pub fn goal_at(&self, agent: usize, t: f64) -> Vec3 {
        let a = &self.agents[agent];
        let g = position(&a.reference.goal());
        match (a.frame, &self.rso) {
            (RefFrame::Target, Some(rso)) => rso.from_rso_frame(&g, t),
            _ => g,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Invalid(m));
        if self.agents.is_empty() {
            return bad("no agents".into());
        }
        if !(self.dt > 0.0) || !(self.duration >= 0.0) {
            return bad(format!(
                "dt must be positive and duration nonnegative (dt = {}, duration = {})",
                self.dt, self.duration
            ));
        }
        if !(self.mass > 0.0 && self.side > 0.0 && self.u_max > 0.0) {
            return bad("mass, side and thrust limit must be positive".into());
        }
        let c = &self.controller;
        if c.horizon == 0 || c.dcol_iterations == 0 {
            return bad("horizon and re-solve passes must be at least 1".into());
        }
        if !(c.s_thr >= 1.0) {
            return bad(format!("scaling threshold {} must be at least 1", c.s_thr));
        }
        if !(c.dcol_slack > 0.0) || !(c.buffer_xi >= 0.0) {
            return bad("slack coefficient must be positive and buffer multiplier nonnegative".into());
        }
        for k in c
            .koz_alphas
            .iter()
            .chain(c.ca_alphas.iter())
            .chain(std::iter::once(&c.braking_alpha))
        {
            k.validate().map_err(|e| SimError::Invalid(e.to_string()))?;
        }
        if !(self.noise.actuation_sigma >= 0.0) {
            return bad("actuation noise must be nonnegative".into());
        }
        if let Some(e) = &self.noise.estimator {
            e.mekf.validate().map_err(|e| SimError::Invalid(e.to_string()))?;
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.reference.samples.len() < 2 {
                return bad(format!("agent {i} reference has fewer than two samples"));
            }
            if a.frame == RefFrame::Target && self.rso.is_none() {
                return bad(format!("agent {i} uses a target-frame reference but no target is defined"));
            }
        }
        // Start-state safety.
        let r = 2.0 * self.r_s();
        for i in 0..self.agents.len() {
            for j in (i + 1)..self.agents.len() {
                let d = position(&self.agents[i].initial) - position(&self.agents[j].initial);
                let h = d.norm_squared() - r * r;
                if h < 0.0 {
                    return Err(SimError::StartInConflict(i, j, h));
                }
            }
        }
        if let Some(rso) = &self.rso {
            let axes = rso.semi_axes.add_scalar(self.r_s());
            for (i, a) in self.agents.iter().enumerate() {
                let p = rso.to_rso_frame(&position(&a.initial), 0.0);
                let h = (0..3).map(|k| p[k] * p[k] / (axes[k] * axes[k])).sum::<f64>() - 1.0;
                if h < 0.0 {
                    return Err(SimError::StartInsideKeepOut(i, h));
                }
            }
        }
        Ok(())
    }
}
