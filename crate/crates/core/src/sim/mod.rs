//! Closed-loop simulation of several agents around a tumbling target, with
//! the tracking controller, the safety layers and the estimator in the loop.

mod engine;
pub mod metrics;
pub mod montecarlo;
mod records;
mod scenario;
pub mod scenarios;

pub use engine::run_scenario;
pub use metrics::{compute_metrics, AgentMetrics, ImpulseNorm, Metrics};
pub use montecarlo::{campaign_scenario, derive_seed, run_monte_carlo, Dispersion, MonteCarloReport, RunSummary};
pub use records::{Branch, SimLog, TickRecord, TickTiming};
pub use scenario::{AgentSpec, ControllerConfig, EstimatorSetup, Mode, NoiseConfig, RefFrame, Scenario, SimError};
