//! Decimated time series of a run and their CSV form.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::estimators::EstimatorKind;

/// Samples of one estimator family. Outer index is the copy (agent, or the
/// single centralized copy), inner index the sample.
#[derive(Clone, Debug, Default)]
pub struct EstimatorTrace {
    pub kind: Option<EstimatorKind>,
    pub theta_hat: Vec<Vec<DVector<f64>>>,
    /// `‖θ̂ − θ‖`
    pub error: Vec<Vec<f64>>,
    /// DREM kinds only.
    pub phi: Vec<Vec<f64>>,
    pub phi_sq_integral: Vec<Vec<f64>>,
}

impl EstimatorTrace {
    pub fn kind(&self) -> EstimatorKind {
        self.kind.expect("estimator trace has a kind")
    }

    pub fn copies(&self) -> usize {
        self.error.len()
    }
}

/// Everything recorded at the sample instants.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub n_agents: usize,
    pub n_params: usize,
    pub t: Vec<f64>,
    /// Active graph index.
    pub sigma: Vec<usize>,
    /// `‖Ĉ_i − C̄‖₂`, indexed `[agent][sample]`.
    pub ctilde: Vec<Vec<f64>>,
    /// `‖ŷ_i − ȳ‖`, indexed `[agent][sample]`.
    pub ytilde: Vec<Vec<f64>>,
    /// `‖ŷ_i − Ĉ_i θ‖`, indexed `[agent][sample]`.
    pub residual: Vec<Vec<f64>>,
    /// Consensus outputs `Ĉ_i`, indexed `[agent][sample]`. Not written to CSV.
    pub chat: Vec<Vec<DMatrix<f64>>>,
    pub estimators: Vec<EstimatorTrace>,
    /// Link status per edge of the active graph.
    pub links: Vec<String>,
    /// `‖Σ X_i‖_F + ‖Σ x_i‖` per sample.
    pub conservation: Vec<f64>,
    /// Largest `|M − Mᵀ|` entry over all `X_i` and `Ĉ_i` per sample.
    pub asymmetry: Vec<f64>,
}

impl Trace {
    pub fn new(n_agents: usize, n_params: usize, kinds: &[EstimatorKind]) -> Self {
        let per_agent = || vec![Vec::new(); n_agents];
        Self {
            n_agents,
            n_params,
            ctilde: per_agent(),
            ytilde: per_agent(),
            residual: per_agent(),
            chat: vec![Vec::new(); n_agents],
            estimators: kinds
                .iter()
                .map(|&kind| {
                    let copies = if kind == EstimatorKind::Centralized {
                        1
                    } else {
                        n_agents
                    };
                    let drem_copies = if kind.is_drem() { copies } else { 0 };
                    EstimatorTrace {
                        kind: Some(kind),
                        theta_hat: vec![Vec::new(); copies],
                        error: vec![Vec::new(); copies],
                        phi: vec![Vec::new(); drem_copies],
                        phi_sq_integral: vec![Vec::new(); drem_copies],
                    }
                })
                .collect(),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn estimator(&self, kind: EstimatorKind) -> Option<&EstimatorTrace> {
        self.estimators.iter().find(|e| e.kind == Some(kind))
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string(), "sigma".to_string()];
        for i in 0..self.n_agents {
            h.push(format!("ctilde_{i}"));
        }
        for i in 0..self.n_agents {
            h.push(format!("ytilde_{i}"));
        }
        for i in 0..self.n_agents {
            h.push(format!("resid_{i}"));
        }
        for e in &self.estimators {
            let tag = e.kind().tag();
            for copy in 0..e.copies() {
                let label = copy_label(e.kind(), copy);
                for mu in 0..self.n_params {
                    h.push(format!("{tag}_theta{label}_{mu}"));
                }
                h.push(format!("{tag}_err{label}"));
            }
            for copy in 0..e.phi.len() {
                h.push(format!("{tag}_phi_{copy}"));
                h.push(format!("{tag}_phisq_{copy}"));
            }
        }
        h.push("links".to_string());
        h
    }

    /// Writes one row per sample. Floats use the shortest round-trip
    /// representation.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for s in 0..self.len() {
            let mut row: Vec<String> = vec![self.t[s].to_string(), self.sigma[s].to_string()];
            for series in [&self.ctilde, &self.ytilde, &self.residual] {
                row.extend(series.iter().map(|v| v[s].to_string()));
            }
            for e in &self.estimators {
                for copy in 0..e.copies() {
                    row.extend(e.theta_hat[copy][s].iter().map(|v| v.to_string()));
                    row.push(e.error[copy][s].to_string());
                }
                for copy in 0..e.phi.len() {
                    row.push(e.phi[copy][s].to_string());
                    row.push(e.phi_sq_integral[copy][s].to_string());
                }
            }
            row.push(self.links[s].clone());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn copy_label(kind: EstimatorKind, copy: usize) -> String {
    if kind == EstimatorKind::Centralized {
        String::new()
    } else {
        format!("_{copy}")
    }
}
