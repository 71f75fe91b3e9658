//! Fixed-step simulation of the coupled consensus and estimator dynamics.
//!
//! A run freezes the active graph, the link-loss mask, the measurement noise
//! and (for ε > 0) the quantized transmissions at the start of every step
//! and integrates the stacked state with classical RK4.

pub mod config;
pub mod metrics;
mod model;
pub mod output;
pub mod rk4;
pub mod scenario;
pub mod sweep;
pub mod trace;

pub use config::{
    apply_override, AnalysisSettings, GainChoice, InitialEstimate, NetworkSpec, RowsSpec,
    ScenarioConfig,
};
pub use metrics::{
    compute_metrics, decay_rate, nondecreasing_in_epsilon, EstimatorMetrics, Metrics,
};
pub use output::write_run_dir;
pub use rk4::{rk4_step, Rk4};
pub use scenario::{
    analyze, analyze_resolved, resolve_gain, run_scenario, run_scenario_with, simulate,
    ConstantsReport, RunOutput, Scenario,
};
pub use sweep::{run_sweep, write_sweep, SweepAxis, SweepRun};
pub use trace::{EstimatorTrace, Trace};
