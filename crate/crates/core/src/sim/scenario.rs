//! Scenario construction, excitation analysis, gain resolution and the
//! integration loop.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::{ConsensusState, LinkMask};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, Gain};
use crate::excitation::{
    avg_gram_pe_level, consensus_error_bound, estimate_assumption_bounds, gain_bound, pe_curve,
    quantized_bounds, switched_feasibility, ExcitationConstants, Feasibility, QuantizedBounds,
};
use crate::graph::{line_graph_connectivity_floor, Segment, SwitchingSchedule, Topology};
use crate::linalg::{asymmetry, spectral_norm};
use crate::par::Execution;
use crate::signals::{rng_stream, sample_noise, Range, RegressorGenerator, StreamPurpose};
use crate::sim::config::{GainChoice, ScenarioConfig};
use crate::sim::metrics::{compute_metrics, Metrics};
use crate::sim::model::{average_surrogate, initial_state, Layout, Model, StepInputs};
use crate::sim::rk4::Rk4;
use crate::sim::trace::Trace;

/// Resolved consensus gains are never below this.
pub const MIN_GAIN: f64 = 1e-6;
/// Any state component beyond this magnitude aborts the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// A validated config with its generator and switching schedule built.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub generator: RegressorGenerator,
    pub schedule: SwitchingSchedule,
    pub theta: DVector<f64>,
}

impl Scenario {
    pub fn build(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_params;
        let big_n = config.n_agents;
        let mut generator = match &config.coefficients {
            Some(table) => {
                if table.len() != big_n {
                    return Err(Error::Config(format!(
                        "coefficient table lists {} agents, n_agents = {big_n}",
                        table.len()
                    )));
                }
                RegressorGenerator::from_table(n, table.clone())?
            }
            None => RegressorGenerator::sample(
                n,
                &config.rows()?,
                Range(config.coeff_range[0], config.coeff_range[1]),
                Range(config.freq_range[0], config.freq_range[1]),
                config.seed,
            )?,
        };
        if let Some(support) = &config.column_support {
            for (agent, cols) in support.iter().enumerate() {
                generator.restrict_columns(agent, cols)?;
            }
        }
        let schedule = build_schedule(config)?;
        Ok(Self {
            config: config.clone(),
            generator,
            schedule,
            theta: DVector::from_column_slice(&config.theta),
        })
    }
}

fn build_schedule(config: &ScenarioConfig) -> Result<SwitchingSchedule> {
    let big_n = config.n_agents;
    let net = &config.network;
    let topologies = net
        .graphs
        .iter()
        .map(|edges| {
            if big_n == 1 {
                if !edges.is_empty() {
                    return Err(Error::Config("a single agent has no links".into()));
                }
                return Ok(Topology::single_agent());
            }
            let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
            Topology::from_edges(big_n, &pairs)
        })
        .collect::<Result<Vec<_>>>()?;
    if net.segments.is_empty() {
        if topologies.len() != 1 {
            return Err(Error::Config(
                "several graphs given but no switching segments".into(),
            ));
        }
        return Ok(SwitchingSchedule::fixed(
            topologies.into_iter().next().expect("one graph"),
        ));
    }
    let segments: Vec<Segment> = net
        .segments
        .iter()
        .map(|&(start, topology)| Segment { start, topology })
        .collect();
    let dwell = net.dwell_min.unwrap_or_else(|| {
        segments
            .windows(2)
            .map(|w| w[1].start - w[0].start)
            .fold(config.t_end.max(config.h), f64::min)
    });
    SwitchingSchedule::new(topologies, segments, dwell)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaPoint {
    pub window: f64,
    pub alpha: f64,
}

/// Everything `analyze` derives before integration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub n_params: usize,
    pub n_agents: usize,
    /// α(T) of the stacked regressor over the horizon.
    pub alpha_curve: Vec<AlphaPoint>,
    /// Smallest T with α above the threshold.
    pub window: Option<f64>,
    pub alpha: f64,
    /// Inflated suprema used in every bound.
    pub beta: f64,
    pub gamma: f64,
    pub beta_sampled: f64,
    pub gamma_sampled: f64,
    pub inflation: f64,
    pub lambda_g: Vec<f64>,
    pub lambda_max: Vec<f64>,
    pub lambda_g_min: f64,
    pub lambda_max_max: f64,
    pub line_graph_floor: Option<f64>,
    pub k_min: Option<f64>,
    /// The gain used by the run.
    pub k: Option<f64>,
    pub gain_safety: f64,
    /// PE level guaranteed for the network average.
    pub avg_gram_level: Option<f64>,
    pub consensus_ceiling: Option<f64>,
    pub quantized: Option<QuantizedBounds>,
    pub switched: Option<Feasibility>,
    pub epsilon: f64,
    pub theta_norm: f64,
}

impl ConstantsReport {
    pub fn excitation(&self) -> Option<ExcitationConstants> {
        self.window.map(|window| ExcitationConstants {
            beta: self.beta,
            gamma: self.gamma,
            alpha: self.alpha,
            window,
            n_params: self.n_params,
            n_agents: self.n_agents,
        })
    }
}

/// Excitation analysis: α(T) curve of the stacked regressor, sampled β and
/// γ, graph spectra, and every bound that follows from them. The gain entry
/// is filled in only for a fixed `k`; see [`resolve_gain`].
pub fn analyze(scenario: &Scenario, exec: Execution) -> Result<ConstantsReport> {
    let cfg = &scenario.config;
    let settings = &cfg.analysis;
    let gen = &scenario.generator;
    let horizon = cfg.t_end;
    let windows: Vec<f64> = settings
        .pe_windows
        .iter()
        .copied()
        .filter(|&w| w <= horizon)
        .collect();
    if windows.is_empty() {
        return Err(Error::Config(format!(
            "no PE window fits into t_end = {horizon}"
        )));
    }
    let curve = pe_curve(
        |t| gen.stacked(t),
        &windows,
        horizon,
        settings.grid_divisions,
        exec,
    )?;
    let alpha_curve: Vec<AlphaPoint> = curve
        .iter()
        .map(|w| AlphaPoint {
            window: w.window,
            alpha: w.alpha,
        })
        .collect();
    let selected = alpha_curve.iter().find(|p| p.alpha > settings.pe_threshold);
    let (window, alpha) = match selected {
        Some(p) => (Some(p.window), p.alpha),
        None => (None, alpha_curve.last().map_or(0.0, |p| p.alpha)),
    };

    let sampled = estimate_assumption_bounds(gen, horizon, settings.bound_grid_step, exec)?;
    let bounds = sampled.inflated(settings.inflation);
    let schedule = &scenario.schedule;
    let multi = cfg.n_agents > 1;
    let lambda_g_min = schedule.lambda_g_min();
    let lambda_max_max = schedule.lambda_max_max();

    let mut report = ConstantsReport {
        n_params: cfg.n_params,
        n_agents: cfg.n_agents,
        alpha_curve,
        window,
        alpha,
        beta: bounds.beta,
        gamma: bounds.gamma,
        beta_sampled: sampled.beta,
        gamma_sampled: sampled.gamma,
        inflation: settings.inflation,
        lambda_g: schedule
            .topologies()
            .iter()
            .map(Topology::lambda2)
            .collect(),
        lambda_max: schedule
            .topologies()
            .iter()
            .map(Topology::lambda_max)
            .collect(),
        lambda_g_min,
        lambda_max_max,
        line_graph_floor: if multi {
            Some(line_graph_connectivity_floor(cfg.n_agents)?)
        } else {
            None
        },
        k_min: None,
        k: match cfg.k {
            GainChoice::Fixed(k) => Some(k),
            GainChoice::Auto(_) => None,
        },
        gain_safety: cfg.gain_safety,
        avg_gram_level: window.map(|w| avg_gram_pe_level(alpha, w, cfg.n_agents)),
        consensus_ceiling: None,
        quantized: None,
        switched: None,
        epsilon: cfg.epsilon,
        theta_norm: scenario.theta.norm(),
    };
    if multi {
        if let Some(c) = report.excitation() {
            report.k_min = Some(gain_bound(&c, lambda_g_min)?);
        }
    }
    fill_gain_dependent(&mut report)?;
    Ok(report)
}

/// Bounds that need the consensus gain.
fn fill_gain_dependent(report: &mut ConstantsReport) -> Result<()> {
    let (Some(k), true) = (report.k, report.n_agents > 1) else {
        return Ok(());
    };
    report.consensus_ceiling = Some(consensus_error_bound(
        report.n_params,
        report.gamma,
        k,
        report.lambda_g_min,
    )?);
    if let Some(c) = report.excitation() {
        report.quantized = Some(quantized_bounds(
            &c,
            k,
            report.lambda_g_min,
            report.lambda_max_max,
            report.epsilon,
            report.theta_norm,
        )?);
        report.switched = Some(switched_feasibility(
            &c,
            k,
            report.lambda_g_min,
            report.lambda_max_max,
            report.epsilon,
        )?);
    }
    Ok(())
}

/// The consensus gain of a run: the configured value, or
/// `max(safety × k_min, 1e−6)` in auto mode.
pub fn resolve_gain(config: &ScenarioConfig, report: &ConstantsReport) -> Result<f64> {
    match config.k {
        GainChoice::Fixed(k) => Ok(k),
        GainChoice::Auto(_) => {
            if report.n_agents == 1 {
                return Ok(MIN_GAIN);
            }
            if report.window.is_none() {
                return Err(Error::NotPersistentlyExciting(format!(
                    "stacked regressor not persistently exciting on [0, {}]: alpha(T) <= {} for every T in {:?}",
                    config.t_end,
                    config.analysis.pe_threshold,
                    report.alpha_curve.iter().map(|p| p.window).collect::<Vec<_>>()
                )));
            }
            let k_min = report
                .k_min
                .expect("k_min is set whenever a window is selected");
            Ok((config.gain_safety * k_min).max(MIN_GAIN))
        }
    }
}

/// Analysis followed by gain resolution.
pub fn analyze_resolved(scenario: &Scenario, exec: Execution) -> Result<ConstantsReport> {
    let mut report = analyze(scenario, exec)?;
    report.k = Some(resolve_gain(&scenario.config, &report)?);
    fill_gain_dependent(&mut report)?;
    Ok(report)
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub constants: ConstantsReport,
    pub trace: Trace,
    pub metrics: Metrics,
}

/// Runs a scenario with the default execution policy.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutput> {
    run_scenario_with(config, Execution::default())
}

pub fn run_scenario_with(config: &ScenarioConfig, exec: Execution) -> Result<RunOutput> {
    let scenario = Scenario::build(config)?;
    let constants = analyze_resolved(&scenario, exec)?;
    let k = constants.k.expect("gain resolved");
    let trace = simulate(&scenario, k, exec)?;
    let metrics = compute_metrics(
        &trace,
        &config.analysis,
        constants.consensus_ceiling,
        constants.window,
        exec,
    )?;
    Ok(RunOutput {
        config: config.clone(),
        constants,
        trace,
        metrics,
    })
}

fn block_gain(cfg: &ScenarioConfig, kind: EstimatorKind) -> Result<Gain> {
    let spec = match kind {
        EstimatorKind::Ge | EstimatorKind::Local => &cfg.gamma_ge,
        EstimatorKind::Drem | EstimatorKind::DremSimple => &cfg.gamma_drem,
        EstimatorKind::Centralized => &cfg.gamma_centralized,
    };
    spec.to_gain(cfg.n_params)
}

/// Redraws every link of the complete graph (row-major `i < j`), so the
/// draws do not depend on which graph is active.
fn redraw_links<R: Rng>(mask: &mut LinkMask, p_loss: f64, rng: &mut R) {
    let n = mask.n_agents();
    for i in 0..n {
        for j in (i + 1)..n {
            let lost = rng.random_bool(p_loss);
            mask.set(i, j, !lost);
        }
    }
}

/// Integrates the coupled system with consensus gain `k` and records the
/// decimated trace.
pub fn simulate(scenario: &Scenario, k: f64, exec: Execution) -> Result<Trace> {
    let cfg = &scenario.config;
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Config(format!(
            "consensus gain must be positive, got {k}"
        )));
    }
    let n = cfg.n_params;
    let big_n = cfg.n_agents;
    let filters = cfg.drem_filters();
    let layout = Layout::new(n, big_n, &cfg.estimators, filters.len());
    let gains = cfg
        .estimators
        .iter()
        .map(|&kind| block_gain(cfg, kind))
        .collect::<Result<Vec<_>>>()?;
    let model = Model {
        generator: &scenario.generator,
        schedule: &scenario.schedule,
        theta: scenario.theta.clone(),
        k,
        eps: cfg.epsilon,
        layout: layout.clone(),
        gains,
        filters,
        parallel: exec.is_parallel() && big_n >= cfg.parallel_min_agents,
    };
    let guarded: Vec<bool> = (0..layout.len)
        .map(|i| !layout.is_phi_integral(i))
        .collect();

    let mut x = initial_state(&layout, &cfg.initial_estimates()?);
    let mut rk = Rk4::new(layout.len);
    let mut trace = Trace::new(big_n, n, &cfg.estimators);

    let mut loss_rng = rng_stream(cfg.seed, 0, StreamPurpose::LinkLoss);
    let mut noise_rngs: Vec<_> = (0..big_n)
        .map(|i| rng_stream(cfg.seed, i, StreamPurpose::SensorNoise))
        .collect();
    let rows = scenario.generator.rows_per_agent().to_vec();
    let loss_every = ((cfg.loss_period / cfg.h).round() as usize).max(1);
    let mut mask = LinkMask::all_up(big_n);

    let n_steps = cfg.n_steps();
    for step in 0..=n_steps {
        let t = step as f64 * cfg.h;
        if cfg.p_loss > 0.0 && step % loss_every == 0 {
            redraw_links(&mut mask, cfg.p_loss, &mut loss_rng);
        }
        let noise = if cfg.noise_sd > 0.0 {
            noise_rngs
                .iter_mut()
                .zip(&rows)
                .map(|(rng, &p)| sample_noise(p, cfg.noise_sd, rng))
                .collect()
        } else {
            Vec::new()
        };
        let mut inputs = StepInputs {
            topology: scenario.schedule.active_topology(t),
            mask: mask.clone(),
            noise,
            held: None,
        };
        if cfg.epsilon > 0.0 {
            inputs.held = Some(model.held_transmissions(t, &x, &inputs));
        }
        if step % cfg.decimation == 0 {
            record(&model, scenario, t, &x, &inputs, &mut trace);
        }
        if step == n_steps {
            break;
        }
        rk.step(|tt, s, d| model.field(tt, s, &inputs, d), t, cfg.h, &mut x)?;
        if let Some(idx) = (0..x.len()).find(|&i| guarded[i] && x[i].abs() > DIVERGENCE_LIMIT) {
            return Err(Error::Diverged {
                t: t + cfg.h,
                signal: layout.describe(idx),
                value: x[idx],
            });
        }
    }
    Ok(trace)
}

fn consensus_state(layout: &Layout, x: &[f64]) -> ConsensusState {
    let n = layout.n;
    let mut state = ConsensusState::zeros(layout.n_agents, n);
    for i in 0..layout.n_agents {
        let off = layout.consensus(i);
        state.big[i] = DMatrix::from_column_slice(n, n, &x[off..off + n * n]);
        state.small[i] = DVector::from_column_slice(&x[off + n * n..off + n * n + n]);
    }
    state
}

fn record(
    model: &Model<'_>,
    scenario: &Scenario,
    t: f64,
    x: &[f64],
    inputs: &StepInputs,
    trace: &mut Trace,
) {
    let cfg = &scenario.config;
    let signals = model.all_signals(t, x, inputs);
    let (c_bar, y_bar) = average_surrogate(&signals);
    let state = consensus_state(&model.layout, x);
    let mut asym = state.max_asymmetry();
    for (i, s) in signals.iter().enumerate() {
        trace.ctilde[i].push(spectral_norm(&(&s.out.chat - &c_bar)));
        trace.ytilde[i].push((&s.out.yhat - &y_bar).norm());
        let r = (&s.out.yhat - &s.out.chat * &model.theta).norm();
        trace.residual[i].push(r);
        trace.chat[i].push(s.out.chat.clone());
        asym = asym.max(asymmetry(&s.out.chat));
    }
    let conservation = state.conservation_residual();
    debug_assert!(
        asym < 1e-9,
        "consensus state lost symmetry at t = {t}: {asym}"
    );
    debug_assert!(
        conservation < 1e-6,
        "consensus sum drifted at t = {t}: {conservation}"
    );
    if cfg.epsilon == 0.0 && cfg.noise_sd == 0.0 {
        let worst = trace
            .residual
            .iter()
            .map(|r| r[r.len() - 1])
            .fold(0.0, f64::max);
        debug_assert!(
            worst < 1e-4,
            "regression residual left zero at t = {t}: {worst}"
        );
    }
    trace.conservation.push(conservation);
    trace.asymmetry.push(asym);

    for (b, est) in trace.estimators.iter_mut().enumerate() {
        for copy in 0..est.copies() {
            let theta_hat = model.estimate(x, b, copy);
            est.error[copy].push((&theta_hat - &model.theta).norm());
            est.theta_hat[copy].push(theta_hat);
        }
        for copy in 0..est.phi.len() {
            let s = model.drem_scalar(x, b, copy, &signals[copy].out);
            est.phi[copy].push(s.phi);
            est.phi_sq_integral[copy].push(s.phi_sq_integral);
        }
    }
    trace.t.push(t);
    trace.sigma.push(inputs.topology);
    trace.links.push(
        inputs
            .mask
            .bitmask(scenario.schedule.topology(inputs.topology)),
    );
}
