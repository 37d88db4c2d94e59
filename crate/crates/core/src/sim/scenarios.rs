//! Canned scenarios: planar crossings, a head-on pair, a single agent
//! grazing the tumbling target, and a two-agent relocation around it.

use nalgebra::UnitQuaternion;

use crate::dynamics::{stack, RsoState, Vec3, DEFAULT_MASS};
use crate::planner::{plan_relocation, rest_to_rest, PlannerConfig, PlannerError, ReferenceTrajectory};

use super::scenario::{AgentSpec, Mode, RefFrame, Scenario};

/// Two agents crossing paths at `angle` from each other, the second path
/// shifted along `x` by `shift`. Agent 0 runs along `x` through the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Crossing {
    pub half_span: f64,
    /// Angle between the two directions of travel, rad.
    pub angle: f64,
    pub shift: f64,
    pub transfer_time: f64,
    pub duration: f64,
}

impl Default for Crossing {
    fn default() -> Self {
        Self {
            half_span: 1.0,
            angle: 160f64.to_radians(),
            shift: 0.05,
            transfer_time: 240.0,
            duration: 300.0,
        }
    }
}

impl Crossing {
    pub fn build(&self, mode: Mode) -> Scenario {
        let l = self.half_span;
        let dir = Vec3::new(self.angle.cos(), self.angle.sin(), 0.0);
        let mid = Vec3::new(self.shift, 0.0, 0.0);
        let a = free_agent(Vec3::new(-l, 0.0, 0.0), Vec3::new(l, 0.0, 0.0), self.transfer_time, 0.0);
        let b = free_agent(mid - dir * l, mid + dir * l, self.transfer_time, 0.0);
        let mut sc = Scenario::new("planar_crossing", vec![a, b], None, mode);
        sc.duration = self.duration;
        sc
    }
}

/// Mirror-image transfers whose references meet at the origin at the same
/// instant. Agent 0 runs from `(-half_span, -rise)` to `(half_span, rise)`,
/// agent 1 is its mirror image in `x`, raised by `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricCrossing {
    pub half_span: f64,
    pub rise: f64,
    pub offset: f64,
    pub transfer_time: f64,
    pub duration: f64,
}

impl Default for SymmetricCrossing {
    fn default() -> Self {
        Self {
            half_span: 1.0,
            rise: 0.25,
            offset: 0.02,
            transfer_time: 240.0,
            duration: 300.0,
        }
    }
}

impl SymmetricCrossing {
    pub fn build(&self, mode: Mode) -> Scenario {
        let (l, h, o) = (self.half_span, self.rise, self.offset);
        let a = free_agent(Vec3::new(-l, -h, 0.0), Vec3::new(l, h, 0.0), self.transfer_time, 0.0);
        let b = free_agent(Vec3::new(l, -h + o, 0.0), Vec3::new(-l, h + o, 0.0), self.transfer_time, 0.0);
        let mut sc = Scenario::new("symmetric_crossing", vec![a, b], None, mode);
        sc.duration = self.duration;
        sc
    }
}

/// Opposite straight transfers along `x`, the second displaced by `offset`
/// in `y` and started `delay` seconds late.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOn {
    pub half_span: f64,
    pub offset: f64,
    pub delay: f64,
    pub transfer_time: f64,
    pub duration: f64,
}

impl Default for HeadOn {
    fn default() -> Self {
        Self {
            half_span: 1.0,
            offset: 0.03,
            delay: 20.0,
            transfer_time: 240.0,
            duration: 300.0,
        }
    }
}

impl HeadOn {
    pub fn build(&self, mode: Mode) -> Scenario {
        let l = self.half_span;
        let a = free_agent(Vec3::new(-l, 0.0, 0.0), Vec3::new(l, 0.0, 0.0), self.transfer_time, 0.0);
        let b = free_agent(
            Vec3::new(l, self.offset, 0.0),
            Vec3::new(-l, self.offset, 0.0),
            self.transfer_time,
            self.delay,
        );
        let mut sc = Scenario::new("head_on", vec![a, b], None, mode);
        sc.duration = self.duration;
        sc
    }
}

fn free_agent(start: Vec3, goal: Vec3, transfer_time: f64, delay: f64) -> AgentSpec {
    let reference = rest_to_rest(start, goal, transfer_time, 1.0, DEFAULT_MASS).expect("positive canned durations");
    AgentSpec {
        initial: stack(&start, &Vec3::zeros()),
        reference,
        frame: RefFrame::Inertial,
        delay,
    }
}

/// The tumbling target used by the target-relative scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub semi_axes: Vec3,
    /// Tumble rate about the body `z` axis, rad/s.
    pub rate: f64,
}

impl Default for Target {
    fn default() -> Self {
        Self {
            semi_axes: Vec3::new(2.0, 0.5, 0.5),
            rate: 0.005,
        }
    }
}

impl Target {
    pub fn state(&self) -> RsoState {
        RsoState::with_box_hull(UnitQuaternion::identity(), Vec3::new(0.0, 0.0, self.rate), self.semi_axes)
            .expect("positive canned semi-axes")
    }
}

/// Target-frame reference planned for a point mass, so a finite body
/// tracking it grazes or cuts the keep-out zone.
pub fn grazing_reference(start: Vec3, goal: Vec3, target: &Target, total_time: f64) -> Result<ReferenceTrajectory, PlannerError> {
    let cfg = PlannerConfig {
        total_time,
        semi_axes: target.semi_axes,
        body_radius: 0.0,
        ..PlannerConfig::default()
    };
    plan_relocation(&stack(&start, &Vec3::zeros()), &stack(&goal, &Vec3::zeros()), &cfg)
}

fn target_agent(rso: &RsoState, start: Vec3, reference: ReferenceTrajectory, delay: f64) -> AgentSpec {
    AgentSpec {
        initial: rso.state_from_rso_frame(&stack(&start, &Vec3::zeros()), 0.0),
        reference,
        frame: RefFrame::Target,
        delay,
    }
}

/// One agent carried past the long side of the target on a point-mass
/// reference.
#[derive(Debug, Clone, PartialEq)]
pub struct RsoApproach {
    pub target: Target,
    pub start: Vec3,
    pub goal: Vec3,
    pub transfer_time: f64,
    pub duration: f64,
}

impl Default for RsoApproach {
    fn default() -> Self {
        Self {
            target: Target::default(),
            start: Vec3::new(-3.0, 0.4, 0.0),
            goal: Vec3::new(3.0, 0.4, 0.0),
            transfer_time: 300.0,
            duration: 300.0,
        }
    }
}

impl RsoApproach {
    pub fn build(&self, mode: Mode) -> Result<Scenario, PlannerError> {
        let rso = self.target.state();
        let reference = grazing_reference(self.start, self.goal, &self.target, self.transfer_time)?;
        let agent = target_agent(&rso, self.start, reference, 0.0);
        let mut sc = Scenario::new("rso_approach", vec![agent], Some(rso), mode);
        sc.duration = self.duration;
        Ok(sc)
    }
}

/// Two agents swapping ends of the target along its long axis on opposite
/// faces. Their references pass each other head-on beside the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Relocation {
    pub target: Target,
    pub starts: [Vec3; 2],
    pub goals: [Vec3; 2],
    pub transfer_time: f64,
    pub duration: f64,
}

impl Default for Relocation {
    fn default() -> Self {
        Self {
            target: Target::default(),
            starts: [Vec3::new(-2.6, 0.45, 0.05), Vec3::new(2.6, 0.45, -0.05)],
            goals: [Vec3::new(2.6, 0.45, 0.05), Vec3::new(-2.6, 0.45, -0.05)],
            transfer_time: 300.0,
            duration: 300.0,
        }
    }
}

impl Relocation {
    pub fn build(&self, mode: Mode) -> Result<Scenario, PlannerError> {
        let rso = self.target.state();
        let mut agents = Vec::with_capacity(2);
        for (s, g) in self.starts.iter().zip(&self.goals) {
            let reference = grazing_reference(*s, *g, &self.target, self.transfer_time)?;
            agents.push(target_agent(&rso, *s, reference, 0.0));
        }
        let mut sc = Scenario::new("relocation", agents, Some(rso), mode);
        sc.duration = self.duration;
        Ok(sc)
    }
}
