//! Dispersed campaigns over a base scenario.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::engine::run_scenario;
use super::metrics::{compute_metrics, ImpulseNorm};
use super::scenario::{Scenario, SimError};

/// Uniform initial-state dispersion, per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispersion {
    pub position: f64,
    pub velocity: f64,
}

impl Default for Dispersion {
    fn default() -> Self {
        Self {
            position: 0.1,
            velocity: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub index: usize,
    pub seed: u64,
    /// Minimum true keep-out value per agent; `+inf` without a target.
    pub min_h_koz: Vec<f64>,
    /// Minimum true pairwise value.
    pub min_h_ca: f64,
    pub impulse: Vec<f64>,
    pub faults: usize,
    /// Set when the run could not be completed.
    pub error: Option<String>,
}

impl RunSummary {
    pub fn success(&self) -> bool {
        self.error.is_none() && self.min_h_ca >= 0.0 && self.min_h_koz.iter().all(|h| *h >= 0.0)
    }

    /// Largest violation depth over the audited constraints, zero if none.
    pub fn worst_violation(&self) -> f64 {
        self.min_h_koz
            .iter()
            .chain(std::iter::once(&self.min_h_ca))
            .fold(0.0_f64, |w, h| w.max(-h))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub n_runs: usize,
    pub master_seed: u64,
    pub dispersion: Dispersion,
    pub runs: Vec<RunSummary>,
    /// Runs with a keep-out violation, per agent.
    pub koz_violations: Vec<usize>,
    pub ca_violations: usize,
    pub min_h_koz: Vec<f64>,
    pub min_h_ca: f64,
    pub failed_runs: usize,
    pub success_rate: f64,
    pub impulse_mean: f64,
    pub impulse_std: f64,
    pub impulse_min: f64,
    pub impulse_max: f64,
}

impl MonteCarloReport {
    pub fn worst_violation(&self) -> f64 {
        self.runs.iter().map(RunSummary::worst_violation).fold(0.0, f64::max)
    }

    /// Summary CSV: dispersion header comment, then one `key,value` per line.
    pub fn write_summary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# dispersion: uniform +/-{} m position, +/-{} m/s velocity per axis; master seed {}",
            self.dispersion.position, self.dispersion.velocity, self.master_seed
        )?;
        writeln!(w, "key,value")?;
        writeln!(w, "n_runs,{}", self.n_runs)?;
        writeln!(w, "success_rate,{}", self.success_rate)?;
        writeln!(w, "failed_runs,{}", self.failed_runs)?;
        for (i, (v, h)) in self.koz_violations.iter().zip(&self.min_h_koz).enumerate() {
            writeln!(w, "h_koz_{}_violations,{v}", i + 1)?;
            writeln!(w, "h_koz_{}_min,{h}", i + 1)?;
        }
        writeln!(w, "h_ca_violations,{}", self.ca_violations)?;
        writeln!(w, "h_ca_min,{}", self.min_h_ca)?;
        writeln!(w, "worst_violation,{}", self.worst_violation())?;
        writeln!(w, "impulse_mean,{}", self.impulse_mean)?;
        writeln!(w, "impulse_std,{}", self.impulse_std)?;
        writeln!(w, "impulse_min,{}", self.impulse_min)?;
        writeln!(w, "impulse_max,{}", self.impulse_max)?;
        Ok(())
    }

    /// Per-run minima, one row per run.
    pub fn write_runs<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let n_agents = self.min_h_koz.len();
        let mut header = vec!["run".to_string(), "seed".into(), "success".into()];
        header.extend((1..=n_agents).map(|i| format!("min_h_koz_{i}")));
        header.push("min_h_ca".into());
        header.extend((1..=n_agents).map(|i| format!("impulse_{i}")));
        header.push("faults".into());
        header.push("error".into());
        wr.write_record(&header)?;
        for r in &self.runs {
            let mut row = vec![r.index.to_string(), r.seed.to_string(), u8::from(r.success()).to_string()];
            row.extend(r.min_h_koz.iter().map(|h| h.to_string()));
            row.push(r.min_h_ca.to_string());
            row.extend(r.impulse.iter().map(|v| v.to_string()));
            row.push(r.faults.to_string());
            row.push(r.error.clone().unwrap_or_default());
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// SplitMix64 of the master seed and run index.
pub fn derive_seed(master: u64, index: usize) -> u64 {
    let mut z = master ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The scenario of run `index`: derived seed and dispersed initial states.
pub fn campaign_scenario(base: &Scenario, master: u64, index: usize, dispersion: &Dispersion) -> Scenario {
    let seed = derive_seed(master, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sc = base.clone().with_seed(seed);
    for a in &mut sc.agents {
        for k in 0..3 {
            a.initial[k] += rng.random_range(-dispersion.position..=dispersion.position);
            a.initial[k + 3] += rng.random_range(-dispersion.velocity..=dispersion.velocity);
        }
    }
    sc
}

fn summarize(index: usize, sc: &Scenario) -> RunSummary {
    let n = sc.agents.len();
    let failed = |e: String| RunSummary {
        index,
        seed: sc.seed,
        min_h_koz: vec![f64::NEG_INFINITY; n],
        min_h_ca: f64::NEG_INFINITY,
        impulse: vec![f64::NAN; n],
        faults: 0,
        error: Some(e),
    };
    let out = catch_unwind(AssertUnwindSafe(|| run_scenario(sc)));
    let log = match out {
        Ok(Ok(log)) => log,
        Ok(Err(e)) => return failed(e.to_string()),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            return failed(SimError::Panic(msg).to_string());
        }
    };
    let m = compute_metrics(&log, ImpulseNorm::L1);
    RunSummary {
        index,
        seed: sc.seed,
        min_h_koz: m.agents.iter().map(|a| a.min_h_koz).collect(),
        min_h_ca: m.agents.iter().map(|a| a.min_h_ca).fold(f64::INFINITY, f64::min),
        impulse: m.agents.iter().map(|a| a.impulse).collect(),
        faults: m.agents.iter().map(|a| a.faults).sum(),
        error: None,
    }
}

/// Runs `n` dispersed copies of `base` in parallel and aggregates them.
/// Runs that error or panic count as failures.
pub fn run_monte_carlo(base: &Scenario, n: usize, master: u64, dispersion: &Dispersion) -> Result<MonteCarloReport, SimError> {
    if n == 0 {
        return Err(SimError::Invalid("a campaign needs at least one run".into()));
    }
    base.validate()?;
    let runs: Vec<RunSummary> = (0..n)
        .into_par_iter()
        .map(|i| summarize(i, &campaign_scenario(base, master, i, dispersion)))
        .collect();
    let n_agents = base.agents.len();
    let mut koz_violations = vec![0; n_agents];
    let mut min_h_koz = vec![f64::INFINITY; n_agents];
    let mut ca_violations = 0;
    let mut min_h_ca = f64::INFINITY;
    let mut impulses = Vec::new();
    let mut failed_runs = 0;
    for r in &runs {
        if r.error.is_some() {
            failed_runs += 1;
            continue;
        }
        for (i, h) in r.min_h_koz.iter().enumerate() {
            koz_violations[i] += usize::from(*h < 0.0);
            min_h_koz[i] = min_h_koz[i].min(*h);
        }
        ca_violations += usize::from(r.min_h_ca < 0.0);
        min_h_ca = min_h_ca.min(r.min_h_ca);
        impulses.push(r.impulse.iter().sum::<f64>());
    }
    let successes = runs.iter().filter(|r| r.success()).count();
    let k = impulses.len().max(1) as f64;
    let mean = impulses.iter().sum::<f64>() / k;
    let var = impulses.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    Ok(MonteCarloReport {
        n_runs: n,
        master_seed: master,
        dispersion: *dispersion,
        koz_violations,
        ca_violations,
        min_h_koz,
        min_h_ca,
        failed_runs,
        success_rate: successes as f64 / n as f64,
        impulse_mean: mean,
        impulse_std: var.sqrt(),
        impulse_min: impulses.iter().copied().fold(f64::INFINITY, f64::min),
        impulse_max: impulses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        runs,
    })
}
