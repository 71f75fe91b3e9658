//! Local parameter estimators fed by the consensus outputs.

mod drem;
mod gradient;
mod monitor;

pub use drem::{
    drem_derivative, drem_extend, drem_filter_derivative, drem_scalarize, drem_simple_scalarize,
    DremFilter, DremFilterBank, DremScalar, FilterState,
};
pub use gradient::{centralized_ge_derivative, ge_derivative, Gain, GainSpec};
pub use monitor::{Divergence, L2DivergenceMonitor, L2Report};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Which estimator produced a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Gradient estimator on the consensus outputs.
    Ge,
    /// DREM with an LTI filter bank.
    Drem,
    /// DREM on the consensus output alone (no filters).
    DremSimple,
    /// Gradient estimator on the stacked, centrally collected data.
    Centralized,
    /// Gradient estimator on an agent's own surrogate data, no consensus.
    Local,
}

impl EstimatorKind {
    pub fn tag(self) -> &'static str {
        match self {
            EstimatorKind::Ge => "ge",
            EstimatorKind::Drem => "drem",
            EstimatorKind::DremSimple => "drem_simple",
            EstimatorKind::Centralized => "centralized",
            EstimatorKind::Local => "local",
        }
    }

    pub fn is_drem(self) -> bool {
        matches!(self, EstimatorKind::Drem | EstimatorKind::DremSimple)
    }
}

/// Estimate and gain of one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorState {
    pub theta_hat: DVector<f64>,
    pub gain: Gain,
}
