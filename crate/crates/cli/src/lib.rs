//! Batch front end: `plan`, `simulate`, `compare` and `montecarlo`.
//!
//! Every command writes into its output directory a `config.toml` echo with
//! all defaults filled in, an `inputs.sha256` digest of everything read, and
//! its CSV and SVG artifacts.

pub mod config;
mod plots;
pub mod svg;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};
use thiserror::Error;

use proxsafe::dynamics::{stack, Vec3};
use proxsafe::planner::{plan_relocation, PlannerConfig, ReferenceTrajectory};
use proxsafe::sim::scenarios::{Crossing, HeadOn, Relocation, RsoApproach, SymmetricCrossing, Target};
use proxsafe::sim::{compute_metrics, run_monte_carlo, Dispersion, EstimatorSetup, ImpulseNorm, Metrics, Mode, Scenario, SimError, SimLog};

use config::{Overrides, Provenance, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime fault: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "proxsafe",
    version,
    about = "Plan, simulate and audit multi-agent relocations around a tumbling target"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimum-energy references for the [plan] boundary conditions.
    Plan(CommonArgs),
    /// One closed-loop run of the configured scenario.
    Simulate(CommonArgs),
    /// The scenario under dcol_only and cbf_only, side by side.
    Compare(CommonArgs),
    /// Dispersed campaign over the configured scenario.
    Montecarlo(CommonArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Sectioned TOML file; every key is optional.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_name = "N")]
    pub runs: Option<usize>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

/// A resolved invocation: configuration, where relative inputs live, and
/// everything hashed into `inputs.sha256`.
pub struct Context {
    pub cfg: RunConfig,
    pub base_dir: PathBuf,
    pub out: PathBuf,
    provenance: Provenance,
    inputs: Vec<(String, Vec<u8>)>,
}

impl Context {
    pub fn load(args: &CommonArgs, env: Vec<(String, String)>) -> Result<Self, CliError> {
        let (text, source, base_dir) = match &args.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (text, p.display().to_string(), dir)
            }
            None => (String::new(), "<defaults>".to_string(), PathBuf::from(".")),
        };
        let flags = Overrides {
            mode: args.mode,
            seed: args.seed,
            runs: args.runs,
        };
        let cfg = config::resolve(&text, &source, &env, &flags)?;
        let mut flag_list = Vec::new();
        if let Some(m) = args.mode {
            flag_list.push(format!("--mode {m}"));
        }
        if let Some(s) = args.seed {
            flag_list.push(format!("--seed {s}"));
        }
        if let Some(n) = args.runs {
            flag_list.push(format!("--runs {n}"));
        }
        Ok(Self {
            cfg,
            base_dir,
            out: args.out.clone(),
            provenance: Provenance {
                config_text: text,
                env,
                flags: flag_list,
            },
            inputs: Vec::new(),
        })
    }

    fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let full = if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        };
        let bytes = fs::read(&full).map_err(|e| CliError::Config(format!("input {}: {e}", full.display())))?;
        let name = full.display().to_string();
        if !self.inputs.iter().any(|(n, _)| *n == name) {
            self.inputs.push((name, bytes.clone()));
        }
        Ok(bytes)
    }

    fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"config\n");
        h.update(self.provenance.config_text.as_bytes());
        for (k, v) in &self.provenance.env {
            h.update(format!("\nenv {k}={v}").as_bytes());
        }
        for f in &self.provenance.flags {
            h.update(format!("\nflag {f}").as_bytes());
        }
        for (name, bytes) in &self.inputs {
            h.update(format!("\ninput {name}\n").as_bytes());
            h.update(bytes);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Creates the output directory and writes the config echo and digest.
    fn prepare_output(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(io_err(&self.out))?;
        self.write_text("config.toml", &self.cfg.echo())?;
        let mut s = format!("{}\n", self.digest());
        s.push_str("# sha256 over the config text, environment overrides, flags and input files:\n");
        for (k, v) in &self.provenance.env {
            s.push_str(&format!("# env {k}={v}\n"));
        }
        for f in &self.provenance.flags {
            s.push_str(&format!("# flag {f}\n"));
        }
        for (name, _) in &self.inputs {
            s.push_str(&format!("# input {name}\n"));
        }
        self.write_text("inputs.sha256", &s)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(io_err(&p))
    }

    fn create(&self, name: &str) -> Result<BufWriter<fs::File>, CliError> {
        let p = self.path(name);
        fs::File::create(&p).map(BufWriter::new).map_err(io_err(&p))
    }

    fn target(&self) -> Target {
        Target {
            semi_axes: Vec3::from(self.cfg.scenario.semi_axes),
            rate: self.cfg.scenario.tumble_rate,
        }
    }

    /// Canned scenario with config overrides and any replacement references.
    pub fn scenario(&mut self, mode: Mode) -> Result<Scenario, CliError> {
        let s = self.cfg.scenario.clone();
        let transfer_time = s.transfer_time.expect("resolved");
        let planning = |e: proxsafe::planner::PlannerError| CliError::Runtime(format!("reference planning: {e}"));
        let mut sc = match s.kind.as_str() {
            "planar_crossing" => Crossing {
                transfer_time,
                duration: s.duration,
                ..Crossing::default()
            }
            .build(mode),
            "symmetric_crossing" => SymmetricCrossing {
                transfer_time,
                duration: s.duration,
                ..SymmetricCrossing::default()
            }
            .build(mode),
            "head_on" => HeadOn {
                transfer_time,
                duration: s.duration,
                ..HeadOn::default()
            }
            .build(mode),
            "rso_approach" => RsoApproach {
                target: self.target(),
                transfer_time,
                duration: s.duration,
                ..RsoApproach::default()
            }
            .build(mode)
            .map_err(planning)?,
            _ => Relocation {
                target: self.target(),
                transfer_time,
                duration: s.duration,
                ..Relocation::default()
            }
            .build(mode)
            .map_err(planning)?,
        };
        if !s.references.is_empty() {
            if s.references.len() != sc.agents.len() {
                return Err(CliError::Config(format!(
                    "[scenario] references: {} files for {} agents",
                    s.references.len(),
                    sc.agents.len()
                )));
            }
            for (i, p) in s.references.iter().enumerate() {
                let bytes = self.read_input(p)?;
                let r = ReferenceTrajectory::read_csv(bytes.as_slice()).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                sc.agents[i].reference = r;
                sc.agents[i].initial = sc.reference_at(i, 0.0);
            }
        }
        sc.seed = self.cfg.run.seed;
        sc.controller = self.cfg.controller.to_config();
        sc.noise.actuation_sigma = self.cfg.noise.actuation_sigma;
        sc.noise.estimator = self.cfg.noise.estimator.then(EstimatorSetup::default);
        sc.validate().map_err(sim_error)?;
        Ok(sc)
    }

    fn dispersion(&self) -> Dispersion {
        Dispersion {
            position: self.cfg.montecarlo.position_dispersion,
            velocity: self.cfg.montecarlo.velocity_dispersion,
        }
    }
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Invalid(m) => CliError::Config(m),
        other => CliError::Runtime(other.to_string()),
    }
}

/// Parses `args` (without the program name handled by clap) and runs the
/// command, reading overrides from the process environment.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let env = config::env_overrides(std::env::vars());
    match cli.command {
        Command::Plan(a) => cmd_plan(&mut Context::load(&a, env)?),
        Command::Simulate(a) => cmd_simulate(&mut Context::load(&a, env)?),
        Command::Compare(a) => cmd_compare(&mut Context::load(&a, env)?),
        Command::Montecarlo(a) => cmd_montecarlo(&mut Context::load(&a, env)?),
    }
}

pub fn cmd_plan(ctx: &mut Context) -> Result<(), CliError> {
    let p = ctx.cfg.plan.clone();
    let pc = PlannerConfig {
        total_time: p.total_time,
        semi_axes: Vec3::from(ctx.cfg.scenario.semi_axes),
        body_radius: p.body_radius,
        dt: p.dt,
        max_iterations: p.max_iterations,
        ..PlannerConfig::default()
    };
    pc.validate().map_err(|e| CliError::Config(format!("[plan] {e}")))?;
    ctx.prepare_output()?;
    let axes = pc.effective_axes();
    let mut summary = String::from("agent,file,rows,energy,min_h_koz\n");
    let mut refs = Vec::new();
    for (i, (s, g)) in p.starts.iter().zip(&p.goals).enumerate() {
        let start = stack(&Vec3::from(*s), &Vec3::zeros());
        let goal = stack(&Vec3::from(*g), &Vec3::zeros());
        let r = plan_relocation(&start, &goal, &pc).map_err(|e| CliError::Runtime(format!("agent {}: {e}", i + 1)))?;
        let name = format!("agent_{}.csv", i + 1);
        r.write_csv(ctx.create(&name)?).map_err(|e| CliError::Runtime(e.to_string()))?;
        let h = r.min_ellipsoid_value(&axes);
        summary.push_str(&format!("{},{name},{},{},{}\n", i + 1, r.samples.len(), r.energy(), h));
        println!(
            "agent {}: {} rows, energy {:.6e}, min h_koz {:.4e}",
            i + 1,
            r.samples.len(),
            r.energy(),
            h
        );
        refs.push(r);
    }
    ctx.write_text("plan_summary.csv", &summary)?;
    ctx.write_text("trajectories.svg", &plots::plan_trajectories(&refs, &pc.semi_axes).render())?;
    Ok(())
}

fn run_logged(sc: &Scenario) -> Result<SimLog, CliError> {
    proxsafe::sim::run_scenario(sc).map_err(sim_error)
}

fn write_log(ctx: &Context, name: &str, log: &SimLog) -> Result<(), CliError> {
    log.write_csv(ctx.create(name)?)
        .map_err(|e| CliError::Runtime(format!("{name}: {e}")))
}

fn metrics_rows(m: &Metrics, mode: Mode) -> String {
    let mut s = String::new();
    for (i, a) in m.agents.iter().enumerate() {
        s.push_str(&format!(
            "{mode},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            i + 1,
            a.impulse,
            a.min_h_koz,
            a.min_h_ca,
            a.min_h1,
            a.min_s_target,
            a.final_goal_distance,
            a.active_ticks,
            a.wall_total,
            a.wall_average,
            a.wall_active_average,
            a.faults,
            m.ticks
        ));
    }
    s
}

const METRICS_HEADER: &str = "mode,agent,impulse,min_h_koz,min_h_ca,min_h1,min_s_target,final_goal_distance,active_ticks,time_total,time_average,time_active,faults,ticks\n";

pub fn cmd_simulate(ctx: &mut Context) -> Result<(), CliError> {
    let mode = ctx.cfg.mode();
    let sc = ctx.scenario(mode)?;
    ctx.prepare_output()?;
    let log = run_logged(&sc)?;
    let m = compute_metrics(&log, ImpulseNorm::L1);
    write_log(ctx, "ticks.csv", &log)?;
    ctx.write_text("metrics.csv", &format!("{METRICS_HEADER}{}", metrics_rows(&m, mode)))?;
    let faults: usize = m.agents.iter().map(|a| a.faults).sum();
    let summary = format!(
        "key,value\nscenario,{}\nmode,{mode}\nseed,{}\nticks,{}\ntotal_impulse,{}\nfraction_none,{}\nfraction_cbf,{}\nfraction_dcol,{}\nlongest_stall,{}\ndeadlock,{}\nfaults,{faults}\n",
        sc.name,
        sc.seed,
        m.ticks,
        m.total_impulse(),
        m.occupancy[0],
        m.occupancy[1],
        m.occupancy[2],
        m.longest_stall,
        m.deadlock
    );
    ctx.write_text("summary.csv", &summary)?;
    plots::write_run_plots(ctx, &sc, &[(mode, &log)])?;
    println!(
        "{} / {mode}: {} ticks, total impulse {:.4} Ns, branches none {:.3} cbf {:.3} dcol {:.3}, faults {faults}",
        sc.name,
        m.ticks,
        m.total_impulse(),
        m.occupancy[0],
        m.occupancy[1],
        m.occupancy[2]
    );
    Ok(())
}

pub fn cmd_compare(ctx: &mut Context) -> Result<(), CliError> {
    let modes = [Mode::DcolOnly, Mode::CbfOnly];
    let scenarios = modes.iter().map(|m| ctx.scenario(*m)).collect::<Result<Vec<_>, _>>()?;
    ctx.prepare_output()?;
    let mut logs = Vec::new();
    for sc in &scenarios {
        let log = run_logged(sc)?;
        write_log(ctx, &format!("ticks_{}.csv", sc.mode), &log)?;
        logs.push(log);
    }
    let n = scenarios[0].agents.len();
    let mut table = String::from("approach");
    for i in 1..=n {
        table.push_str(&format!(",impulse_{i}"));
    }
    table.push_str(",time_total,time_average,time_active,faults\n");
    let mut per_agent = String::from(METRICS_HEADER);
    println!(
        "{:<10}{}  {:>10} {:>10} {:>10}",
        "approach",
        (1..=n).map(|i| format!("{:>11}", format!("impulse_{i}"))).collect::<String>(),
        "total [s]",
        "avg [s]",
        "active [s]"
    );
    for (mode, log) in modes.iter().zip(&logs) {
        let m = compute_metrics(log, ImpulseNorm::L1);
        let label = if *mode == Mode::DcolOnly { "DCOL" } else { "CBF" };
        let total = m.agents.iter().map(|a| a.wall_total).sum::<f64>() / n as f64;
        let avg = m.agents.iter().map(|a| a.wall_average).sum::<f64>() / n as f64;
        let faults: usize = m.agents.iter().map(|a| a.faults).sum();
        table.push_str(label);
        for a in &m.agents {
            table.push_str(&format!(",{}", a.impulse));
        }
        table.push_str(&format!(",{total},{avg},{},{faults}\n", m.active_average()));
        per_agent.push_str(&metrics_rows(&m, *mode));
        println!(
            "{label:<10}{}  {total:>10.4} {avg:>10.2e} {:>10.2e}",
            m.agents.iter().map(|a| format!("{:>11.4}", a.impulse)).collect::<String>(),
            m.active_average()
        );
    }
    ctx.write_text("compare.csv", &table)?;
    ctx.write_text("metrics.csv", &per_agent)?;
    let pairs: Vec<(Mode, &SimLog)> = modes.iter().copied().zip(logs.iter()).collect();
    plots::write_run_plots(ctx, &scenarios[0], &pairs)?;
    Ok(())
}

pub fn cmd_montecarlo(ctx: &mut Context) -> Result<(), CliError> {
    let sc = ctx.scenario(ctx.cfg.mode())?;
    ctx.prepare_output()?;
    let n = ctx.cfg.montecarlo.runs;
    let report = run_monte_carlo(&sc, n, ctx.cfg.run.seed, &ctx.dispersion()).map_err(sim_error)?;
    let mut w = ctx.create("summary.csv")?;
    report.write_summary(&mut w).map_err(io_err(&ctx.path("summary.csv")))?;
    w.flush().map_err(io_err(&ctx.path("summary.csv")))?;
    report
        .write_runs(ctx.create("runs.csv")?)
        .map_err(|e| CliError::Runtime(format!("runs.csv: {e}")))?;
    println!(
        "{} / {}: {n} runs, success {:.3}, worst violation {:.3e}, impulse {:.4} +/- {:.4} Ns",
        sc.name,
        sc.mode,
        report.success_rate,
        report.worst_violation(),
        report.impulse_mean,
        report.impulse_std
    );
    Ok(())
}
