//! One-axis parameter sweeps executed as independent concurrent runs.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::sim::config::{GainChoice, ScenarioConfig};
use crate::sim::output::write_run_dir;
use crate::sim::scenario::{run_scenario_with, RunOutput};

pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Epsilon,
    Seed,
    K,
    NoiseSd,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" => Ok(SweepAxis::Epsilon),
            "seed" => Ok(SweepAxis::Seed),
            "k" => Ok(SweepAxis::K),
            "noise_sd" => Ok(SweepAxis::NoiseSd),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}` (expected epsilon, seed, k or noise_sd)"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Seed => "seed",
            SweepAxis::K => "k",
            SweepAxis::NoiseSd => "noise_sd",
        })
    }
}

/// `base` with one axis set to `value`.
pub fn apply_axis(base: &ScenarioConfig, axis: SweepAxis, value: f64) -> Result<ScenarioConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Epsilon => cfg.epsilon = value,
        SweepAxis::NoiseSd => cfg.noise_sd = value,
        SweepAxis::K => cfg.k = GainChoice::Fixed(value),
        SweepAxis::Seed => {
            if !(value >= 0.0 && value.fract() == 0.0 && value <= u64::MAX as f64) {
                return Err(Error::Config(format!(
                    "seed must be a non-negative integer, got {value}"
                )));
            }
            cfg.seed = value as u64;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Outcome of one sweep point.
#[derive(Debug)]
pub struct SweepRun {
    pub value: f64,
    pub outcome: Result<RunOutput>,
}

/// Runs every value of the axis; each point is an independent scenario.
/// Configs are validated up front so a bad value fails the whole sweep
/// before any integration.
pub fn run_sweep(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    exec: Execution,
) -> Result<Vec<SweepRun>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| apply_axis(base, axis, v))
        .collect::<Result<Vec<_>>>()?;
    let outcomes = exec.map(&configs, |cfg| run_scenario_with(cfg, exec));
    Ok(values
        .iter()
        .zip(outcomes)
        .map(|(&value, outcome)| SweepRun { value, outcome })
        .collect())
}

fn run_dir_name(axis: SweepAxis, value: f64) -> String {
    format!("{axis}-{value}")
}

/// Writes each successful run into its own subdirectory and the summary
/// table: per estimator the worst tail supremum, final error and decay rate
/// over agents, plus the worst consensus tail.
pub fn write_sweep(dir: &Path, axis: SweepAxis, runs: &[SweepRun]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let kinds: Vec<_> = runs
        .iter()
        .find_map(|r| r.outcome.as_ref().ok())
        .map(|r| r.config.estimators.clone())
        .unwrap_or_default();
    let mut w = csv::Writer::from_path(dir.join(SUMMARY_FILE))?;
    let mut header = vec![
        axis.to_string(),
        "status".to_string(),
        "k".to_string(),
        "ctilde_tail_sup".to_string(),
    ];
    for kind in &kinds {
        for col in ["tail_sup", "final_error", "decay_rate"] {
            header.push(format!("{}_{col}", kind.tag()));
        }
    }
    w.write_record(&header)?;
    for run in runs {
        let mut row = vec![run.value.to_string()];
        match &run.outcome {
            Ok(out) => {
                write_run_dir(&dir.join(run_dir_name(axis, run.value)), out)?;
                let m = &out.metrics;
                row.push("ok".into());
                row.push(out.constants.k.map_or(String::new(), |k| k.to_string()));
                row.push(worst(&m.consensus.tail_sup_ctilde).to_string());
                for kind in &kinds {
                    match m.estimator(*kind) {
                        Some(e) => {
                            row.push(worst(&e.tail_sup_error).to_string());
                            row.push(worst(&e.final_error).to_string());
                            row.push(
                                worst(&e.decay_rate.iter().flatten().copied().collect::<Vec<_>>())
                                    .to_string(),
                            );
                        }
                        None => row.extend(std::iter::repeat_n(String::new(), 3)),
                    }
                }
            }
            Err(e) => {
                row.push(match e {
                    Error::Diverged { .. } => "diverged".into(),
                    _ => "error".into(),
                });
                row.extend(std::iter::repeat_n(String::new(), header.len() - 2));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn worst(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}
