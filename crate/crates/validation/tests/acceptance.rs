//! End-to-end acceptance suite. Prints one line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::{Duration, Instant};

use common::{random_box_qp, random_lp_2d, refined_grid_search, vertex_enumeration};
use nalgebra::UnitQuaternion;
use proxsafe::convex::{solve_lp, solve_qp, SolveStatus};
use proxsafe::dynamics::State6;
use proxsafe::estimation::{uncertainty_buffer, MekfState};
use proxsafe::sim::metrics::{compute_metrics, dominance};
use proxsafe::sim::scenarios::{Crossing, HeadOn, Relocation, RsoApproach, SymmetricCrossing};
use proxsafe::sim::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(limit: Duration, took: Duration) -> bool {
    took < limit
}

fn solver_oracles() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_kkt, mut worst_gap, mut worst_lp) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut ok = true;
    for _ in 0..100 {
        let q = random_box_qp(&mut rng, 0.1);
        let r = solve_qp(&q.problem).unwrap();
        ok &= r.status == SolveStatus::Optimal;
        let (_, f) = refined_grid_search(&q, 5e-3, 12);
        worst_gap = worst_gap.max((r.objective - f).max(0.0));
        worst_kkt = worst_kkt.max(q.problem.kkt_residuals(&r.primal, &r.duals, &r.eq_duals).max());
    }
    let mut optimal = 0;
    for _ in 0..100 {
        let p = random_lp_2d(&mut rng);
        let r = solve_lp(&p).unwrap();
        match vertex_enumeration(&p) {
            Some((_, f)) => {
                ok &= r.status == SolveStatus::Optimal;
                worst_lp = worst_lp.max((r.objective - f).abs());
                worst_kkt = worst_kkt.max(p.kkt_residuals(&r.primal, &r.duals).max());
                optimal += 1;
            }
            None => ok &= r.status == SolveStatus::Infeasible,
        }
    }
    let took = t0.elapsed();
    let pass = ok && worst_gap <= 1e-9 && worst_lp <= 1e-9 && worst_kkt <= 1e-8 && within(Duration::from_secs(10), took);
    outcome(
        pass,
        format!(
            "200 problems ({optimal} feasible LPs), QP excess over grid {worst_gap:.1e}, LP gap {worst_lp:.1e}, max KKT {worst_kkt:.1e}, {:.2}s",
            took.as_secs_f64()
        ),
    )
}

fn gradients() -> Outcome {
    let t0 = Instant::now();
    let h1 = common::fd::braking(1000, 11);
    let koz = common::fd::keep_out_chain(1000, 12);
    let ca = common::fd::pair_chain(1000, 13);
    let s = common::fd::scaling_center(1000, 14);
    let took = t0.elapsed();
    let pass = h1 < 1e-5 && koz < 1e-5 && ca < 1e-5 && s < 1e-4 && within(Duration::from_secs(30), took);
    outcome(
        pass,
        format!(
            "worst relative error: braking {h1:.1e}, keep-out chain {koz:.1e}, pair chain {ca:.1e}, scaling {s:.1e}; {:.2}s",
            took.as_secs_f64()
        ),
    )
}

fn forward_invariance() -> Outcome {
    let t0 = Instant::now();
    let disp = Dispersion::default();
    let crossing = Crossing::default().build(Mode::CbfOnly);
    let mut min_h1 = f64::INFINITY;
    for i in 0..100 {
        let log = run_scenario(&campaign_scenario(&crossing, 2024, i, &disp)).unwrap();
        let m = compute_metrics(&log, ImpulseNorm::L1);
        min_h1 = m.agents.iter().map(|a| a.min_h1).fold(min_h1, f64::min);
    }
    let approach = RsoApproach::default().build(Mode::CbfOnly).unwrap();
    let mut min_koz = f64::INFINITY;
    for i in 0..100 {
        let log = run_scenario(&campaign_scenario(&approach, 2025, i, &disp)).unwrap();
        let m = compute_metrics(&log, ImpulseNorm::L1);
        min_koz = min_koz.min(m.agents[0].min_h_koz);
    }
    let took = t0.elapsed();
    let pass = min_h1 >= -1e-6 && min_koz >= -1e-6 && within(Duration::from_secs(120), took);
    outcome(
        pass,
        format!(
            "crossings min h1 {min_h1:.3e}, target approaches min h_koz {min_koz:.3e}; {:.2}s",
            took.as_secs_f64()
        ),
    )
}

fn impulse_ratio() -> Outcome {
    let run = |mode| compute_metrics(&run_scenario(&Crossing::default().build(mode)).unwrap(), ImpulseNorm::L1);
    let d = run(Mode::DcolOnly);
    let c = run(Mode::CbfOnly);
    let ratio = d.total_impulse() / c.total_impulse();
    let pass = ratio > 1.3 && d.active_average() > c.active_average();
    let per = |m: &Metrics| m.agents.iter().map(|a| format!("{:.4}", a.impulse)).collect::<Vec<_>>().join("+");
    outcome(
        pass,
        format!(
            "impulse DCOL {} vs CBF {} Ns (ratio {ratio:.2}); active solve time DCOL {:.2e} s vs CBF {:.2e} s",
            per(&d),
            per(&c),
            d.active_average(),
            c.active_average()
        ),
    )
}

fn failure_modes() -> Outcome {
    let sym = |mode| run_scenario(&SymmetricCrossing::default().build(mode)).unwrap();
    let head = |mode| run_scenario(&HeadOn::default().build(mode)).unwrap();
    let stuck = compute_metrics(&sym(Mode::DcolOnly), ImpulseNorm::L1);
    let (dom, i, j) = dominance(&head(Mode::DcolOnly), 0.2);
    let mut worst_goal = 0.0_f64;
    for log in [sym(Mode::CbfOnly), head(Mode::CbfOnly)] {
        for a in 0..log.n_agents {
            worst_goal = worst_goal.max(log.final_goal_distance(a));
        }
    }
    let pass = stuck.deadlock && dom > 20.0 && worst_goal < 0.05;
    outcome(
        pass,
        format!(
            "symmetric DCOL stall {:.0}s (deadlock {}); head-on DCOL agent {} on agent {}'s reference for {dom:.0}s; CBF worst final goal distance {worst_goal:.2e} m",
            stuck.longest_stall,
            stuck.deadlock,
            i + 1,
            j + 1
        ),
    )
}

fn inflation_factor() -> Outcome {
    let run = |mode| run_scenario(&RsoApproach::default().build(mode).unwrap()).unwrap();
    let d = run(Mode::DcolOnly);
    let c = run(Mode::CbfOnly);
    let min_s = d.records.iter().map(|r| r.s_target).fold(f64::INFINITY, f64::min);
    let active: Vec<f64> = d.records.iter().filter(|r| r.branch != Branch::None).map(|r| r.s_target).collect();
    let band = active.iter().filter(|s| (1.05..=1.15).contains(*s)).count() as f64 / active.len().max(1) as f64;
    let peak = |log: &SimLog| {
        log.records
            .iter()
            .filter(|r| r.branch != Branch::None)
            .map(|r| r.s_target)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (pd, pc) = (peak(&d), peak(&c));
    let pass = min_s >= 1.0 && band >= 0.8 && pc > pd;
    outcome(
        pass,
        format!(
            "DCOL min s {min_s:.4}, {:.1}% of {} active ticks in [1.05, 1.15]; peak s on active ticks CBF {pc:.4} vs DCOL {pd:.4}",
            100.0 * band,
            active.len()
        ),
    )
}

fn monte_carlo() -> Outcome {
    let t0 = Instant::now();
    let mut noisy = Relocation::default().build(Mode::Hybrid).unwrap();
    noisy.noise.estimator = Some(EstimatorSetup::default());
    noisy.noise.actuation_sigma = 1e-4;
    let clean = Relocation::default().build(Mode::Hybrid).unwrap();
    let disp = Dispersion::default();
    let a = run_monte_carlo(&noisy, 500, 7, &disp).unwrap();
    let b = run_monte_carlo(&clean, 500, 8, &disp).unwrap();
    let took = t0.elapsed();
    let pass = a.success_rate >= 0.95 && a.worst_violation() < 0.05 && b.success_rate == 1.0 && within(Duration::from_secs(1800), took);
    outcome(
        pass,
        format!(
            "estimator in loop: success {:.3}, worst violation {:.2e}, min h_koz {:?}, min h_ca {:.3e}; true state: success {:.3}; {:.1}s",
            a.success_rate,
            a.worst_violation(),
            a.min_h_koz.iter().map(|h| format!("{h:.3e}")).collect::<Vec<_>>(),
            a.min_h_ca,
            b.success_rate,
            took.as_secs_f64()
        ),
    )
}

fn estimator_health() -> Outcome {
    let runs = 50;
    let nees = common::nees::ensemble_nees(runs, 200, 0.5, 2024);
    let chi = ChiSquared::new(6.0 * runs as f64).unwrap();
    let lo = chi.inverse_cdf(0.025) / runs as f64;
    let hi = chi.inverse_cdf(0.975) / runs as f64;
    let inside = nees.iter().filter(|v| (lo..=hi).contains(*v)).count() as f64 / nees.len() as f64;
    let mean = nees.iter().sum::<f64>() / nees.len() as f64;
    let s = MekfState::new(State6::zeros(), 1.0, 1.0, UnitQuaternion::identity(), 0.01);
    let buffer_err = (uncertainty_buffer(&s, 1.0) - 3f64.sqrt()).abs();
    let pass = inside >= 0.95 && buffer_err <= 1e-12;
    outcome(
        pass,
        format!(
            "{:.1}% of ticks inside [{lo:.3}, {hi:.3}], mean NEES {mean:.3}; identity-covariance buffer error {buffer_err:.1e}",
            100.0 * inside
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("solver oracles", solver_oracles),
        ("gradient suite", gradients),
        ("forward invariance", forward_invariance),
        ("impulse ratio", impulse_ratio),
        ("failure modes", failure_modes),
        ("inflation factor", inflation_factor),
        ("monte carlo", monte_carlo),
        ("estimator health", estimator_health),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "criterion {} {name}: {} - {}",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
