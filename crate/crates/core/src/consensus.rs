//! Dynamic average consensus over the surrogate regression data.
//!
//! Each agent integrates
//!
//! ```text
//! Ẋ_i = k Σ_{j∈N_i} (Q(Ĉ_i) − Q(Ĉ_j)),   Ĉ_i = C'_i − X_i
//! ẋ_i = k Σ_{j∈N_i} (Q(ŷ_i) − Q(ŷ_j)),   ŷ_i = y'_i − x_i
//! ```
//!
//! with `Q` the floor quantizer (identity for `ε = 0`) and `N_i` the
//! neighbours in the active graph whose link is up.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::linalg::{asymmetry, max_abs, mean_matrix, mean_vector, spectral_norm};
use crate::signals::{quantize_matrix, quantize_vector, Surrogate};

/// Integrator states `X_i` (n×n) and `x_i` (n) of every agent.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusState {
    pub big: Vec<DMatrix<f64>>,
    pub small: Vec<DVector<f64>>,
}

impl ConsensusState {
    /// Standard initialization `X_i(0) = 0`, `x_i(0) = 0`.
    pub fn zeros(n_agents: usize, n_params: usize) -> Self {
        Self {
            big: vec![DMatrix::zeros(n_params, n_params); n_agents],
            small: vec![DVector::zeros(n_params); n_agents],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.big.len()
    }

    /// Max component of `|Σ_i X_i|` and `|Σ_i x_i|`.
    pub fn conservation_residual(&self) -> f64 {
        let sum_big = self
            .big
            .iter()
            .skip(1)
            .fold(self.big[0].clone(), |acc, m| acc + m);
        let sum_small = self
            .small
            .iter()
            .skip(1)
            .fold(self.small[0].clone(), |acc, v| acc + v);
        max_abs(sum_big.iter().chain(sum_small.iter()).copied())
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.big.iter().map(asymmetry).fold(0.0, f64::max)
    }
}

/// Consensus outputs `Ĉ_i = C'_i − X_i`, `ŷ_i = y'_i − x_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusOutput {
    pub chat: DMatrix<f64>,
    pub yhat: DVector<f64>,
}

impl ConsensusOutput {
    pub fn quantized(&self, eps: f64) -> Self {
        Self {
            chat: quantize_matrix(&self.chat, eps),
            yhat: quantize_vector(&self.yhat, eps),
        }
    }
}

pub fn consensus_output(
    big: &DMatrix<f64>,
    small: &DVector<f64>,
    s: &Surrogate,
) -> ConsensusOutput {
    ConsensusOutput {
        chat: &s.cp - big,
        yhat: &s.yp - small,
    }
}

pub fn consensus_outputs(state: &ConsensusState, surrogates: &[Surrogate]) -> Vec<ConsensusOutput> {
    state
        .big
        .iter()
        .zip(&state.small)
        .zip(surrogates)
        .map(|((b, s), sur)| consensus_output(b, s, sur))
        .collect()
}

/// Up/down status of every undirected link, stored as a symmetric table so
/// a dropped link disappears from both endpoints' sums.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkMask {
    n_agents: usize,
    up: Vec<bool>,
}

impl LinkMask {
    pub fn all_up(n_agents: usize) -> Self {
        Self {
            n_agents,
            up: vec![true; n_agents * n_agents],
        }
    }

    pub fn set(&mut self, i: usize, j: usize, up: bool) {
        self.up[i * self.n_agents + j] = up;
        self.up[j * self.n_agents + i] = up;
    }

    #[inline]
    pub fn is_up(&self, i: usize, j: usize) -> bool {
        self.up[i * self.n_agents + j]
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// '1'/'0' per edge of `topo`, in edge order.
    pub fn bitmask(&self, topo: &Topology) -> String {
        topo.edges()
            .iter()
            .map(|&(i, j)| if self.is_up(i, j) { '1' } else { '0' })
            .collect()
    }
}

/// Time derivative of the consensus state.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusDerivative {
    pub big: Vec<DMatrix<f64>>,
    pub small: Vec<DVector<f64>>,
}

/// Derivative of one agent's integrators from the values its neighbours
/// transmit.
pub fn agent_derivative(
    agent: usize,
    transmitted: &[ConsensusOutput],
    topo: &Topology,
    k: f64,
    mask: &LinkMask,
) -> (DMatrix<f64>, DVector<f64>) {
    let own = &transmitted[agent];
    let n = own.yhat.len();
    let mut d_big = DMatrix::zeros(n, n);
    let mut d_small = DVector::zeros(n);
    for &j in topo.neighbors(agent) {
        if !mask.is_up(agent, j) {
            continue;
        }
        d_big += &own.chat - &transmitted[j].chat;
        d_small += &own.yhat - &transmitted[j].yhat;
    }
    (d_big * k, d_small * k)
}

/// Derivative of the whole consensus block given already-transmitted
/// (possibly quantized and held) outputs.
pub fn dac_derivative_from_transmitted(
    transmitted: &[ConsensusOutput],
    topo: &Topology,
    k: f64,
    mask: &LinkMask,
) -> Result<ConsensusDerivative> {
    if transmitted.len() != topo.n_agents() || mask.n_agents() != topo.n_agents() {
        return Err(Error::DimensionMismatch(format!(
            "{} outputs / {}-agent mask for a {}-agent graph",
            transmitted.len(),
            mask.n_agents(),
            topo.n_agents()
        )));
    }
    let (big, small) = (0..transmitted.len())
        .map(|i| agent_derivative(i, transmitted, topo, k, mask))
        .unzip();
    Ok(ConsensusDerivative { big, small })
}

/// `Ẋ_i`, `ẋ_i` for the current state: outputs are formed, quantized with
/// step `eps`, and differenced over the active links.
pub fn dac_derivative(
    state: &ConsensusState,
    surrogates: &[Surrogate],
    topo: &Topology,
    k: f64,
    eps: f64,
    mask: &LinkMask,
) -> Result<ConsensusDerivative> {
    if state.n_agents() != surrogates.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} consensus states, {} surrogates",
            state.n_agents(),
            surrogates.len()
        )));
    }
    let n = state.small[0].len();
    for (i, s) in surrogates.iter().enumerate() {
        if s.cp.shape() != (n, n)
            || s.yp.len() != n
            || state.big[i].shape() != (n, n)
            || state.small[i].len() != n
        {
            return Err(Error::DimensionMismatch(format!(
                "agent {i} does not match n = {n}"
            )));
        }
    }
    let transmitted: Vec<_> = consensus_outputs(state, surrogates)
        .iter()
        .map(|o| o.quantized(eps))
        .collect();
    dac_derivative_from_transmitted(&transmitted, topo, k, mask)
}

/// Network averages `C̄ = (1/N) Σ C'_j`, `ȳ = (1/N) Σ y'_j`.
pub fn average_reference(surrogates: &[Surrogate]) -> (DMatrix<f64>, DVector<f64>) {
    let cps: Vec<_> = surrogates.iter().map(|s| s.cp.clone()).collect();
    let yps: Vec<_> = surrogates.iter().map(|s| s.yp.clone()).collect();
    (mean_matrix(&cps), mean_vector(&yps))
}

/// `(‖Ĉ_i − C̄‖₂, ‖ŷ_i − ȳ‖)`.
pub fn consensus_error(
    output: &ConsensusOutput,
    reference: &(DMatrix<f64>, DVector<f64>),
) -> (f64, f64) {
    (
        spectral_norm(&(&output.chat - &reference.0)),
        (&output.yhat - &reference.1).norm(),
    )
}

/// Regression residual `r_i = ŷ_i − Ĉ_i θ`.
pub fn residual(output: &ConsensusOutput, theta: &DVector<f64>) -> DVector<f64> {
    &output.yhat - &output.chat * theta
}
