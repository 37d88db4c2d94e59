//! Run configuration: a sectioned TOML file, environment overrides and
//! command-line flags, resolved into a fully populated [`RunConfig`].

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use proxsafe::cbf::ClassKappa;
use proxsafe::sim::{ControllerConfig, Mode};

use crate::CliError;

/// Prefix of environment overrides: `PROXSAFE_<SECTION>_<KEY>=<value>`.
pub const ENV_PREFIX: &str = "PROXSAFE_";

pub const SECTIONS: [&str; 6] = ["run", "scenario", "controller", "noise", "montecarlo", "plan"];

pub const SCENARIO_KINDS: [&str; 5] = ["planar_crossing", "symmetric_crossing", "head_on", "rso_approach", "relocation"];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub scenario: ScenarioSection,
    pub controller: ControllerSection,
    pub noise: NoiseSection,
    pub montecarlo: MonteCarloSection,
    pub plan: PlanSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: String,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            mode: Mode::Hybrid.name().into(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: String,
    pub duration: f64,
    /// Defaults per kind when absent.
    pub transfer_time: Option<f64>,
    pub semi_axes: [f64; 3],
    pub tumble_rate: f64,
    /// Trajectory CSVs replacing the canned references, one per agent.
    /// Relative paths resolve against the config file.
    pub references: Vec<PathBuf>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            kind: "relocation".into(),
            duration: 300.0,
            transfer_time: None,
            semi_axes: [2.0, 0.5, 0.5],
            tumble_rate: 0.005,
            references: Vec::new(),
        }
    }
}

impl ScenarioSection {
    pub fn default_transfer_time(kind: &str) -> f64 {
        match kind {
            "planar_crossing" | "symmetric_crossing" | "head_on" => 240.0,
            _ => 300.0,
        }
    }
}

/// Class-K functions are linear; each gain is its slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub horizon: usize,
    pub w_pos: f64,
    pub w_vel: f64,
    pub w_u: f64,
    pub rho: f64,
    pub s_thr: f64,
    pub dcol_slack: f64,
    pub dcol_iterations: usize,
    pub dcol_same_side: bool,
    pub braking_gain: f64,
    pub koz_gains: [f64; 2],
    pub ca_gains: [f64; 2],
    pub buffer_xi: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let c = ControllerConfig::default();
        Self {
            horizon: c.horizon,
            w_pos: c.w_pos,
            w_vel: c.w_vel,
            w_u: c.w_u,
            rho: c.rho,
            s_thr: c.s_thr,
            dcol_slack: c.dcol_slack,
            dcol_iterations: c.dcol_iterations,
            dcol_same_side: c.dcol_same_side,
            braking_gain: c.braking_alpha.gain,
            koz_gains: c.koz_alphas.map(|k| k.gain),
            ca_gains: c.ca_alphas.map(|k| k.gain),
            buffer_xi: c.buffer_xi,
        }
    }
}

impl ControllerSection {
    pub fn to_config(&self) -> ControllerConfig {
        ControllerConfig {
            horizon: self.horizon,
            w_pos: self.w_pos,
            w_vel: self.w_vel,
            w_u: self.w_u,
            rho: self.rho,
            s_thr: self.s_thr,
            dcol_slack: self.dcol_slack,
            dcol_iterations: self.dcol_iterations,
            dcol_same_side: self.dcol_same_side,
            braking_alpha: ClassKappa::linear(self.braking_gain),
            koz_alphas: self.koz_gains.map(ClassKappa::linear),
            ca_alphas: self.ca_gains.map(ClassKappa::linear),
            buffer_xi: self.buffer_xi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Per-axis force noise, N.
    pub actuation_sigma: f64,
    /// Run the tandem filter in the loop instead of feeding true states.
    pub estimator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub runs: usize,
    pub position_dispersion: f64,
    pub velocity_dispersion: f64,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self {
            runs: 10,
            position_dispersion: 0.1,
            velocity_dispersion: 0.01,
        }
    }
}

/// Boundary conditions in the target frame, one start and goal per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub starts: Vec<[f64; 3]>,
    pub goals: Vec<[f64; 3]>,
    pub total_time: f64,
    pub dt: f64,
    pub body_radius: f64,
    pub max_iterations: usize,
}

impl Default for PlanSection {
    fn default() -> Self {
        let p = proxsafe::planner::PlannerConfig::default();
        Self {
            starts: vec![[-2.6, 0.45, 0.05], [2.6, 0.45, -0.05]],
            goals: vec![[2.6, 0.45, 0.05], [-2.6, 0.45, -0.05]],
            total_time: p.total_time,
            dt: p.dt,
            body_radius: p.body_radius,
            max_iterations: p.max_iterations,
        }
    }
}

/// Command-line values that take precedence over the file and environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
}

/// Everything that went into a resolved configuration, for hashing.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub config_text: String,
    pub env: Vec<(String, String)>,
    pub flags: Vec<String>,
}

/// Parses `text` and applies the overrides. `source` names the file in
/// error messages.
pub fn resolve(text: &str, source: &str, env: &[(String, String)], flags: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(format!("{source}: {e}")))?;
    if !env.is_empty() {
        let mut table: Table = toml::from_str(text).map_err(|e| CliError::Config(format!("{source}: {e}")))?;
        for (name, raw) in env {
            apply_env(&mut table, name, raw)?;
        }
        cfg = RunConfig::deserialize(Value::Table(table)).map_err(|e| CliError::Config(format!("environment override: {e}")))?;
    }
    if let Some(m) = flags.mode {
        cfg.run.mode = m.name().into();
    }
    if let Some(s) = flags.seed {
        cfg.run.seed = s;
    }
    if let Some(n) = flags.runs {
        cfg.montecarlo.runs = n;
    }
    if cfg.scenario.transfer_time.is_none() {
        cfg.scenario.transfer_time = Some(ScenarioSection::default_transfer_time(&cfg.scenario.kind));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `PROXSAFE_*` variables whose section part names a config section.
/// Others, such as `PROXSAFE_LOG`, are left alone.
pub fn env_overrides(vars: impl IntoIterator<Item = (String, String)>) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| split_env_name(k).is_some()).collect();
    out.sort();
    out
}

fn split_env_name(name: &str) -> Option<(&'static str, String)> {
    let rest = name.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
    SECTIONS.iter().find_map(|s| {
        let key = rest.strip_prefix(s)?.strip_prefix('_')?;
        (!key.is_empty()).then(|| (*s, key.to_string()))
    })
}

fn apply_env(table: &mut Table, name: &str, raw: &str) -> Result<(), CliError> {
    let (section, key) = split_env_name(name).ok_or_else(|| CliError::Config(format!("{name}: not a config override")))?;
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let entry = table.entry(section).or_insert_with(|| Value::Table(Table::new()));
    match entry {
        Value::Table(t) => {
            t.insert(key, value);
            Ok(())
        }
        _ => Err(CliError::Config(format!("{name}: [{section}] is not a table"))),
    }
}

impl RunConfig {
    pub fn mode(&self) -> Mode {
        self.run.mode.parse().expect("validated")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if let Err(e) = self.run.mode.parse::<Mode>() {
            return bad(format!("[run] mode: {e}"));
        }
        let s = &self.scenario;
        if !SCENARIO_KINDS.contains(&s.kind.as_str()) {
            return bad(format!(
                "[scenario] kind '{}': expected one of {}",
                s.kind,
                SCENARIO_KINDS.join(", ")
            ));
        }
        if !(s.duration >= 0.0) || !s.transfer_time.is_none_or(|t| t > 0.0) {
            return bad("[scenario] duration must be nonnegative and transfer_time positive".into());
        }
        if s.semi_axes.iter().any(|a| !(*a > 0.0)) || !s.tumble_rate.is_finite() {
            return bad("[scenario] semi_axes must be positive and tumble_rate finite".into());
        }
        let p = &self.plan;
        if p.starts.len() != p.goals.len() || p.starts.is_empty() {
            return bad(format!(
                "[plan] needs matching starts and goals ({} vs {})",
                p.starts.len(),
                p.goals.len()
            ));
        }
        let m = &self.montecarlo;
        if m.runs == 0 || !(m.position_dispersion >= 0.0) || !(m.velocity_dispersion >= 0.0) {
            return bad("[montecarlo] runs must be positive and dispersions nonnegative".into());
        }
        if !(self.noise.actuation_sigma >= 0.0) {
            return bad("[noise] actuation_sigma must be nonnegative".into());
        }
        Ok(())
    }

    /// Fully populated TOML, defaults included.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
