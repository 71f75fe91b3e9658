//! Scalar summaries extracted from a trace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, L2DivergenceMonitor, L2Report};
use crate::excitation::pe_level;
use crate::par::Execution;
use crate::sim::config::AnalysisSettings;
use crate::sim::trace::Trace;

/// Fewest post-transient samples accepted by the decay fit.
pub const MIN_FIT_SAMPLES: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMetrics {
    pub kind: EstimatorKind,
    pub initial_error: Vec<f64>,
    pub final_error: Vec<f64>,
    /// Least-squares slope of `ln‖θ̃‖` after the transient; `None` when
    /// the error starts at or drops to the floor too early to fit.
    pub decay_rate: Vec<Option<f64>>,
    /// `sup ‖θ̃‖` over the tail window.
    pub tail_sup_error: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_divergence: Option<Vec<L2Report>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusMetrics {
    /// Ultimate bound `nγ/(kλ_{G,m})` with the inflated γ; absent for a
    /// single agent.
    pub ceiling: Option<f64>,
    /// First sample time at which every `‖C̃_i‖` is below the ceiling.
    pub transient_end: Option<f64>,
    pub tail_sup_ctilde: Vec<f64>,
    pub tail_sup_residual: Vec<f64>,
    /// Every tail `‖C̃_i‖` within the ceiling.
    pub within_ceiling: Option<bool>,
    /// Excitation level of each `Ĉ_i` after the transient.
    pub pe_transfer: Vec<f64>,
    pub pe_transfer_window: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantMetrics {
    pub max_conservation: f64,
    pub max_asymmetry: f64,
    pub max_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub samples: usize,
    pub t_end: f64,
    pub estimators: Vec<EstimatorMetrics>,
    pub consensus: ConsensusMetrics,
    pub invariants: InvariantMetrics,
}

impl Metrics {
    pub fn estimator(&self, kind: EstimatorKind) -> Option<&EstimatorMetrics> {
        self.estimators.iter().find(|e| e.kind == kind)
    }
}

/// Slope of the least-squares line through `(t, ln e)`.
///
/// The fit starts after `transient_fraction` of the horizon and stops at the
/// first sample where `e ≤ floor·e₀`, since below that the log only tracks
/// roundoff. When convergence finishes early the window is extended
/// backwards to keep [`MIN_FIT_SAMPLES`] points.
pub fn decay_rate(t: &[f64], err: &[f64], transient_fraction: f64, floor: f64) -> Result<f64> {
    if t.len() != err.len() || t.is_empty() {
        return Err(Error::InsufficientSamples(
            "empty or mismatched series".into(),
        ));
    }
    let t0 = t[0] + transient_fraction * (t[t.len() - 1] - t[0]);
    let transient_end = t.partition_point(|&s| s < t0);
    let threshold = floor * err[0].abs();
    let stop = err
        .iter()
        .position(|e| e.abs() <= threshold)
        .unwrap_or(err.len());
    let start = if stop >= transient_end + MIN_FIT_SAMPLES {
        transient_end
    } else {
        stop.saturating_sub(MIN_FIT_SAMPLES)
    };
    let n = stop - start;
    if n < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples(format!(
            "{n} samples above the error floor, need {MIN_FIT_SAMPLES}"
        )));
    }
    let xs = &t[start..stop];
    let ys: Vec<f64> = err[start..stop].iter().map(|e| e.abs().ln()).collect();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientSamples(
            "all fit samples at one instant".into(),
        ));
    }
    Ok(sxy / sxx)
}

/// Index of the first sample in the tail window.
fn tail_start(t: &[f64], tail_fraction: f64) -> usize {
    let end = t[t.len() - 1];
    let from = end - tail_fraction * (end - t[0]);
    t.partition_point(|&s| s < from - 1e-12).min(t.len() - 1)
}

fn sup_from(series: &[f64], start: usize) -> f64 {
    series[start..].iter().fold(0.0_f64, |m, &v| m.max(v))
}

/// True when the tail suprema are non-decreasing in ε.
pub fn nondecreasing_in_epsilon(points: &[(f64, f64)]) -> bool {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    sorted.windows(2).all(|w| w[1].1 >= w[0].1)
}

/// Derives all metrics from a trace.
pub fn compute_metrics(
    trace: &Trace,
    settings: &AnalysisSettings,
    ceiling: Option<f64>,
    pe_window: Option<f64>,
    exec: Execution,
) -> Result<Metrics> {
    if trace.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "{} trace samples",
            trace.len()
        )));
    }
    let t = &trace.t;
    let fit_from = t[0] + settings.transient_fraction * (t[t.len() - 1] - t[0]);
    let fit_samples = t.len() - t.partition_point(|&s| s < fit_from);
    if fit_samples < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples(format!(
            "{fit_samples} samples after the transient, need {MIN_FIT_SAMPLES}"
        )));
    }
    let tail = tail_start(t, settings.tail_fraction);

    let mut estimators = Vec::new();
    for e in &trace.estimators {
        let mut m = EstimatorMetrics {
            kind: e.kind(),
            initial_error: Vec::new(),
            final_error: Vec::new(),
            decay_rate: Vec::new(),
            tail_sup_error: Vec::new(),
            l2_divergence: None,
        };
        for err in &e.error {
            m.initial_error.push(err[0]);
            m.final_error.push(err[err.len() - 1]);
            m.decay_rate
                .push(decay_rate(t, err, settings.transient_fraction, settings.decay_floor).ok());
            m.tail_sup_error.push(sup_from(err, tail));
        }
        if !e.phi_sq_integral.is_empty() {
            let reports = e
                .phi_sq_integral
                .iter()
                .map(|cum| {
                    let mut mon = L2DivergenceMonitor::new(
                        settings.monitor_window,
                        settings.monitor_floor,
                        settings.monitor_recent,
                    );
                    for (s, c) in t.iter().zip(cum) {
                        mon.observe_cumulative(*s, *c);
                    }
                    mon.report()
                })
                .collect();
            m.l2_divergence = Some(reports);
        }
        estimators.push(m);
    }

    let transient_end = ceiling.and_then(|c| {
        (0..trace.len())
            .find(|&s| trace.ctilde.iter().all(|series| series[s] <= c))
            .map(|s| t[s])
    });
    let tail_sup_ctilde: Vec<f64> = trace.ctilde.iter().map(|s| sup_from(s, tail)).collect();
    let tail_sup_residual: Vec<f64> = trace.residual.iter().map(|s| sup_from(s, tail)).collect();
    let within_ceiling = ceiling.map(|c| tail_sup_ctilde.iter().all(|&v| v <= c));

    let (pe_transfer, pe_transfer_window) = match pe_window {
        Some(window) if !trace.chat.iter().any(|c| c.is_empty()) => {
            let dt = t[1] - t[0];
            let window = window.max(10.0 * dt);
            let t0 = transient_end
                .unwrap_or(t[0] + settings.transient_fraction * (t[t.len() - 1] - t[0]));
            let first = t.partition_point(|&s| s < t0 - 1e-12);
            let horizon = t[t.len() - 1] - t[first];
            if horizon >= window {
                let levels = (0..trace.n_agents)
                    .map(|agent| {
                        let samples = &trace.chat[agent][first..];
                        let signal = |s: f64| {
                            samples[((s / dt).round() as usize).min(samples.len() - 1)].clone()
                        };
                        pe_level(signal, window, horizon, dt, exec).map(|w| w.alpha)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (levels, Some(window))
            } else {
                (Vec::new(), None)
            }
        }
        _ => (Vec::new(), None),
    };

    let invariants = InvariantMetrics {
        max_conservation: trace.conservation.iter().fold(0.0_f64, |m, &v| m.max(v)),
        max_asymmetry: trace.asymmetry.iter().fold(0.0_f64, |m, &v| m.max(v)),
        max_residual: trace
            .residual
            .iter()
            .flatten()
            .fold(0.0_f64, |m, &v| m.max(v)),
    };

    Ok(Metrics {
        samples: trace.len(),
        t_end: t[t.len() - 1],
        estimators,
        consensus: ConsensusMetrics {
            ceiling,
            transient_end,
            tail_sup_ctilde,
            tail_sup_residual,
            within_ceiling,
            pe_transfer,
            pe_transfer_window,
        },
        invariants,
    })
}
