//! Scenario description (the JSON schema read by the CLI).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{DremFilter, EstimatorKind, GainSpec};
use crate::signals::Sinusoid;

fn default_rows() -> RowsSpec {
    RowsSpec::Uniform(1)
}
fn default_coeff_range() -> [f64; 2] {
    [0.0, 20.0]
}
fn default_freq_range() -> [f64; 2] {
    [0.0, 3.0]
}
fn default_safety() -> f64 {
    1.01
}
fn default_gain() -> GainSpec {
    GainSpec::Scalar(1.0)
}
fn default_loss_period() -> f64 {
    0.1
}
fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Ge, EstimatorKind::Drem]
}
fn default_h() -> f64 {
    1e-3
}
fn default_decimation() -> usize {
    10
}
fn default_parallel_min_agents() -> usize {
    64
}

/// Regressor rows per agent: one number for all agents or a list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RowsSpec {
    Uniform(usize),
    PerAgent(Vec<usize>),
}

/// Consensus gain: a number, or `"auto"` for `safety × k_min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainChoice {
    Fixed(f64),
    Auto(AutoTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoTag {
    #[serde(rename = "auto")]
    Auto,
}

/// Initial estimates: one vector shared by all agents, or one per agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialEstimate {
    Shared(Vec<f64>),
    PerAgent(Vec<Vec<f64>>),
}

/// Graph family and switching signal. Edges are 0-based `[i, j]` pairs;
/// `segments` are `[start_time, graph_index]`. No segments means graph 0
/// throughout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub graphs: Vec<Vec<[usize; 2]>>,
    #[serde(default)]
    pub segments: Vec<(f64, usize)>,
    #[serde(default)]
    pub dwell_min: Option<f64>,
}

/// Knobs of the excitation analysis and metric extraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSettings {
    /// Candidate PE windows T for the α(T) curve.
    pub pe_windows: Vec<f64>,
    /// Quadrature steps per window (grid = T / grid_divisions).
    pub grid_divisions: usize,
    /// The smallest T whose α exceeds this is selected.
    pub pe_threshold: f64,
    /// Grid step for the β, γ suprema.
    pub bound_grid_step: f64,
    /// Multiplier applied to the sampled β, γ suprema.
    pub inflation: f64,
    /// Leading fraction of the horizon discarded before the decay fit.
    pub transient_fraction: f64,
    /// Trailing fraction of the horizon used for tail suprema.
    pub tail_fraction: f64,
    /// Errors are clamped at `decay_floor × initial error` before taking logs.
    pub decay_floor: f64,
    pub monitor_window: f64,
    pub monitor_floor: f64,
    pub monitor_recent: usize,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            pe_windows: vec![0.08, 0.16, 0.32, 0.64, 1.28],
            grid_divisions: 200,
            pe_threshold: 1e-3,
            bound_grid_step: 1e-3,
            inflation: 1.05,
            transient_fraction: 0.3,
            tail_fraction: 0.2,
            decay_floor: 1e-12,
            monitor_window: 1.0,
            monitor_floor: 1e-12,
            monitor_recent: 3,
        }
    }
}

/// Full experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub n_params: usize,
    pub n_agents: usize,
    #[serde(default = "default_rows")]
    pub rows_per_agent: RowsSpec,
    pub theta: Vec<f64>,
    #[serde(default = "default_coeff_range")]
    pub coeff_range: [f64; 2],
    #[serde(default = "default_freq_range")]
    pub freq_range: [f64; 2],
    pub seed: u64,
    /// Per agent, the regressor columns allowed to be nonzero.
    #[serde(default)]
    pub column_support: Option<Vec<Vec<usize>>>,
    /// Explicit coefficient table `[agent][row][col]`; replaces sampling.
    #[serde(default)]
    pub coefficients: Option<Vec<Vec<Vec<Sinusoid>>>>,
    pub network: NetworkSpec,
    pub k: GainChoice,
    #[serde(default = "default_safety")]
    pub gain_safety: f64,
    #[serde(default = "default_gain")]
    pub gamma_ge: GainSpec,
    #[serde(default = "default_gain")]
    pub gamma_drem: GainSpec,
    #[serde(default = "default_gain")]
    pub gamma_centralized: GainSpec,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub p_loss: f64,
    /// Link states are redrawn every `loss_period` seconds.
    #[serde(default = "default_loss_period")]
    pub loss_period: f64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    /// Defaults to `n − 1` unit-gain filters with poles `1, 2, …`.
    #[serde(default)]
    pub drem_filters: Option<Vec<DremFilter>>,
    /// Defaults to zero.
    #[serde(default)]
    pub theta0: Option<InitialEstimate>,
    #[serde(default = "default_h")]
    pub h: f64,
    pub t_end: f64,
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    /// Per-agent field evaluation fans out only on networks at least this
    /// large.
    #[serde(default = "default_parallel_min_agents")]
    pub parallel_min_agents: usize,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn rows(&self) -> Result<Vec<usize>> {
        match &self.rows_per_agent {
            RowsSpec::Uniform(p) => Ok(vec![*p; self.n_agents]),
            RowsSpec::PerAgent(v) if v.len() == self.n_agents => Ok(v.clone()),
            RowsSpec::PerAgent(v) => Err(cfg_err(format!(
                "rows_per_agent lists {} agents, n_agents = {}",
                v.len(),
                self.n_agents
            ))),
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.h).round() as usize
    }

    /// Rows in the emitted trace: `⌊T_end / (h·decimation)⌋ + 1`.
    pub fn n_samples(&self) -> usize {
        self.n_steps() / self.decimation + 1
    }

    pub fn drem_filters(&self) -> Vec<DremFilter> {
        self.drem_filters
            .clone()
            .unwrap_or_else(|| crate::estimators::DremFilterBank::default_filters(self.n_params))
    }

    pub fn initial_estimates(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.n_params;
        let per_agent = match &self.theta0 {
            None => vec![vec![0.0; n]; self.n_agents],
            Some(InitialEstimate::Shared(v)) => vec![v.clone(); self.n_agents],
            Some(InitialEstimate::PerAgent(v)) => v.clone(),
        };
        if per_agent.len() != self.n_agents || per_agent.iter().any(|v| v.len() != n) {
            return Err(cfg_err(format!(
                "theta0 must give {n} values for each of {} agents",
                self.n_agents
            )));
        }
        Ok(per_agent)
    }

    /// Checks everything that can be checked without building the scenario.
    pub fn validate(&self) -> Result<()> {
        if self.n_params == 0 || self.n_agents == 0 {
            return Err(cfg_err("n_params and n_agents must be positive"));
        }
        if self.theta.len() != self.n_params || self.theta.iter().any(|v| !v.is_finite()) {
            return Err(cfg_err(format!(
                "theta must have {} finite entries",
                self.n_params
            )));
        }
        let rows = self.rows()?;
        if rows.contains(&0) {
            return Err(cfg_err("every agent needs at least one regressor row"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(cfg_err(format!(
                "integrator step h must be positive, got {}",
                self.h
            )));
        }
        if !(self.t_end >= 10.0 * self.h) || !self.t_end.is_finite() {
            return Err(cfg_err(format!(
                "t_end = {} must be at least 10·h",
                self.t_end
            )));
        }
        if self.decimation == 0 {
            return Err(cfg_err("decimation must be positive"));
        }
        if let GainChoice::Fixed(k) = self.k {
            if !(k > 0.0 && k.is_finite()) {
                return Err(cfg_err(format!(
                    "consensus gain k must be positive, got {k}"
                )));
            }
        }
        if !(self.gain_safety > 0.0) {
            return Err(cfg_err("gain_safety must be positive"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(cfg_err("epsilon must be a finite non-negative step"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(cfg_err("noise_sd must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.p_loss) {
            return Err(cfg_err("p_loss must lie in [0, 1]"));
        }
        if !(self.loss_period > 0.0) {
            return Err(cfg_err("loss_period must be positive"));
        }
        if self.estimators.is_empty() {
            return Err(cfg_err("select at least one estimator"));
        }
        for (i, kind) in self.estimators.iter().enumerate() {
            if self.estimators[..i].contains(kind) {
                return Err(cfg_err(format!("estimator {} listed twice", kind.tag())));
            }
        }
        self.gamma_ge
            .to_gain(self.n_params)
            .map_err(|e| cfg_err(format!("gamma_ge: {e}")))?;
        self.gamma_centralized
            .to_gain(self.n_params)
            .map_err(|e| cfg_err(format!("gamma_centralized: {e}")))?;
        let drem = self
            .gamma_drem
            .to_gain(self.n_params)
            .map_err(|e| cfg_err(format!("gamma_drem: {e}")))?;
        if !drem.is_diagonal() {
            return Err(cfg_err("gamma_drem must be diagonal"));
        }
        for f in self.drem_filters() {
            DremFilter::new(f.alpha, f.beta).map_err(|e| cfg_err(format!("drem_filters: {e}")))?;
        }
        self.initial_estimates()?;
        if let Some(support) = &self.column_support {
            if support.len() != self.n_agents {
                return Err(cfg_err("column_support needs one entry per agent"));
            }
        }
        if self.network.graphs.is_empty() {
            return Err(cfg_err("network needs at least one graph"));
        }
        let a = &self.analysis;
        if a.pe_windows.is_empty() || a.pe_windows.iter().any(|&w| !(w > 0.0)) {
            return Err(cfg_err(
                "analysis.pe_windows must be non-empty and positive",
            ));
        }
        if a.grid_divisions < 10 {
            return Err(cfg_err("analysis.grid_divisions must be at least 10"));
        }
        if !(a.bound_grid_step > 0.0) || !(a.inflation >= 1.0) {
            return Err(cfg_err(
                "analysis.bound_grid_step must be positive and inflation >= 1",
            ));
        }
        if !(0.0..1.0).contains(&a.transient_fraction)
            || !(a.tail_fraction > 0.0 && a.tail_fraction <= 1.0)
        {
            return Err(cfg_err("analysis fractions out of range"));
        }
        if !(a.monitor_window > 0.0) {
            return Err(cfg_err("analysis.monitor_window must be positive"));
        }
        Ok(())
    }
}

/// Applies a dotted `key=value` override onto a JSON config tree. The value
/// is parsed as JSON when possible and as a string otherwise; unknown keys
/// are caught later by schema validation.
pub fn apply_override(root: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| cfg_err(format!("override `{assignment}` is not key=value")))?;
    let value: serde_json::Value =
        serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        let obj = node.as_object_mut().ok_or_else(|| {
            cfg_err(format!(
                "override `{path}`: `{key}` is not inside an object"
            ))
        })?;
        if last {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        node = obj
            .entry((*key).to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Err(cfg_err(format!("empty override key in `{assignment}`")))
}
