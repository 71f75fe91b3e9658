//! Flat-state layout and the coupled vector field of a scenario.

use nalgebra::{DMatrix, DVector};

use crate::consensus::{consensus_output, ConsensusOutput, LinkMask};
use crate::estimators::{
    drem_derivative, drem_extend, drem_filter_derivative, drem_scalarize, drem_simple_scalarize,
    DremFilter, DremFilterBank, DremScalar, EstimatorKind, EstimatorState, FilterState, Gain,
};
use crate::graph::SwitchingSchedule;
use crate::signals::{surrogate_of, RegressorGenerator, Sinusoid, Surrogate};

/// Offsets of one estimator family inside the flat state.
#[derive(Clone, Debug)]
pub(crate) struct Block {
    pub kind: EstimatorKind,
    pub offset: usize,
    /// Slots per copy.
    pub stride: usize,
    pub copies: usize,
}

/// State layout: per agent `X_i` (n², column-major) then `x_i` (n); then one
/// block per estimator, per copy `θ̂` (n), for DREM kinds `∫φ²` (1), and for
/// filtered DREM the filter states `(Z_j, z_j)`.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub n: usize,
    pub n_agents: usize,
    pub blocks: Vec<Block>,
    pub len: usize,
}

impl Layout {
    pub fn new(n: usize, n_agents: usize, kinds: &[EstimatorKind], n_filters: usize) -> Self {
        let mut offset = n_agents * (n * n + n);
        let blocks = kinds
            .iter()
            .map(|&kind| {
                let (stride, copies) = match kind {
                    EstimatorKind::Ge | EstimatorKind::Local => (n, n_agents),
                    EstimatorKind::DremSimple => (n + 1, n_agents),
                    EstimatorKind::Drem => (n + 1 + n_filters * (n * n + n), n_agents),
                    EstimatorKind::Centralized => (n, 1),
                };
                let b = Block {
                    kind,
                    offset,
                    stride,
                    copies,
                };
                offset += stride * copies;
                b
            })
            .collect();
        Self {
            n,
            n_agents,
            blocks,
            len: offset,
        }
    }

    #[inline]
    pub fn consensus(&self, agent: usize) -> usize {
        agent * (self.n * self.n + self.n)
    }

    #[inline]
    pub fn copy(&self, block: usize, copy: usize) -> usize {
        let b = &self.blocks[block];
        b.offset + copy * b.stride
    }

    pub fn is_phi_integral(&self, idx: usize) -> bool {
        self.blocks.iter().any(|b| {
            b.kind.is_drem()
                && idx >= b.offset
                && idx < b.offset + b.stride * b.copies
                && (idx - b.offset) % b.stride == self.n
        })
    }

    /// Human-readable name of a state slot.
    pub fn describe(&self, idx: usize) -> String {
        let n = self.n;
        let cons = self.n_agents * (n * n + n);
        if idx < cons {
            let agent = idx / (n * n + n);
            let local = idx % (n * n + n);
            return if local < n * n {
                format!("X[{agent}]({},{})", local % n, local / n)
            } else {
                format!("x[{agent}][{}]", local - n * n)
            };
        }
        for b in &self.blocks {
            if idx >= b.offset && idx < b.offset + b.stride * b.copies {
                let copy = (idx - b.offset) / b.stride;
                let local = (idx - b.offset) % b.stride;
                return if local < n {
                    format!("{}.theta_hat[{copy}][{local}]", b.kind.tag())
                } else if local == n {
                    format!("{}.phi_sq_integral[{copy}]", b.kind.tag())
                } else {
                    format!("{}.filter[{copy}][{}]", b.kind.tag(), local - n - 1)
                };
            }
        }
        format!("state[{idx}]")
    }
}

/// Quantities frozen over one integration step.
#[derive(Clone, Debug)]
pub(crate) struct StepInputs {
    pub topology: usize,
    pub mask: LinkMask,
    /// Measurement noise per agent (empty when noise is off).
    pub noise: Vec<DVector<f64>>,
    /// Transmissions held over the step (quantized runs only).
    pub held: Option<Vec<ConsensusOutput>>,
}

/// Per-agent signals at one time instant.
#[derive(Clone, Debug)]
pub(crate) struct AgentSignals {
    pub c: DMatrix<f64>,
    pub y: DVector<f64>,
    pub surrogate: Surrogate,
    pub out: ConsensusOutput,
}

pub(crate) struct Model<'a> {
    pub generator: &'a RegressorGenerator,
    pub schedule: &'a SwitchingSchedule,
    pub theta: DVector<f64>,
    pub k: f64,
    pub eps: f64,
    pub layout: Layout,
    /// One gain per block.
    pub gains: Vec<Gain>,
    pub filters: Vec<DremFilter>,
    pub parallel: bool,
}

fn read_matrix(x: &[f64], offset: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, &x[offset..offset + n * n])
}

fn read_vector(x: &[f64], offset: usize, n: usize) -> DVector<f64> {
    DVector::from_column_slice(&x[offset..offset + n])
}

/// Per-agent derivative pieces, scattered into the flat vector afterwards.
struct AgentDerivative {
    consensus: Vec<f64>,
    /// `(slot offset, values)` for each estimator copy owned by the agent.
    estimators: Vec<(usize, Vec<f64>)>,
}

impl<'a> Model<'a> {
    fn n(&self) -> usize {
        self.layout.n
    }

    pub fn agent_signals(
        &self,
        agent: usize,
        t: f64,
        x: &[f64],
        inputs: &StepInputs,
    ) -> AgentSignals {
        let n = self.n();
        let c = self.generator.eval_unchecked(agent, t, Sinusoid::value);
        let mut y = &c * &self.theta;
        if let Some(eta) = inputs.noise.get(agent) {
            y += eta;
        }
        let surrogate = surrogate_of(&c, &y);
        let off = self.layout.consensus(agent);
        let big = read_matrix(x, off, n);
        let small = read_vector(x, off + n * n, n);
        let out = consensus_output(&big, &small, &surrogate);
        AgentSignals {
            c,
            y,
            surrogate,
            out,
        }
    }

    pub fn all_signals(&self, t: f64, x: &[f64], inputs: &StepInputs) -> Vec<AgentSignals> {
        self.map_agents(|i| self.agent_signals(i, t, x, inputs))
    }

    fn map_agents<R: Send, F: Fn(usize) -> R + Sync + Send>(&self, f: F) -> Vec<R> {
        let exec = if self.parallel {
            crate::Execution::Parallel
        } else {
            crate::Execution::Sequential
        };
        exec.map_range(self.layout.n_agents, f)
    }

    pub fn filter_bank(&self, x: &[f64], block: usize, agent: usize) -> DremFilterBank {
        let n = self.n();
        let mut off = self.layout.copy(block, agent) + n + 1;
        let states = self
            .filters
            .iter()
            .map(|_| {
                let big = read_matrix(x, off, n);
                let small = read_vector(x, off + n * n, n);
                off += n * n + n;
                FilterState { big, small }
            })
            .collect();
        DremFilterBank {
            filters: self.filters.clone(),
            states,
        }
    }

    /// Mixed scalar regression of a DREM copy at the current state.
    pub fn drem_scalar(
        &self,
        x: &[f64],
        block: usize,
        agent: usize,
        out: &ConsensusOutput,
    ) -> DremScalar {
        let mut s = match self.layout.blocks[block].kind {
            EstimatorKind::Drem => {
                let bank = self.filter_bank(x, block, agent);
                let (cf, yf) = drem_extend(out, &bank);
                drem_scalarize(&cf, &yf)
            }
            _ => drem_simple_scalarize(out),
        };
        s.phi_sq_integral = x[self.layout.copy(block, agent) + self.n()];
        s
    }

    pub fn estimate(&self, x: &[f64], block: usize, copy: usize) -> DVector<f64> {
        read_vector(x, self.layout.copy(block, copy), self.n())
    }

    fn agent_derivative(
        &self,
        agent: usize,
        x: &[f64],
        signals: &[AgentSignals],
        inputs: &StepInputs,
    ) -> AgentDerivative {
        let n = self.n();
        let topo = self.schedule.topology(inputs.topology);
        let transmitted = |j: usize| -> &ConsensusOutput {
            match &inputs.held {
                Some(h) => &h[j],
                None => &signals[j].out,
            }
        };
        let own_tx = transmitted(agent);
        let mut d_big = DMatrix::<f64>::zeros(n, n);
        let mut d_small = DVector::<f64>::zeros(n);
        for &j in topo.neighbors(agent) {
            if !inputs.mask.is_up(agent, j) {
                continue;
            }
            let other = transmitted(j);
            d_big += &own_tx.chat - &other.chat;
            d_small += &own_tx.yhat - &other.yhat;
        }
        let mut consensus = Vec::with_capacity(n * n + n);
        consensus.extend((d_big * self.k).iter());
        consensus.extend((d_small * self.k).iter());

        let out = &signals[agent].out;
        let mut estimators = Vec::new();
        for (b, block) in self.layout.blocks.iter().enumerate() {
            if block.kind == EstimatorKind::Centralized {
                continue;
            }
            let off = self.layout.copy(b, agent);
            let state = EstimatorState {
                theta_hat: read_vector(x, off, n),
                gain: self.gains[b].clone(),
            };
            let values = match block.kind {
                EstimatorKind::Ge => crate::estimators::ge_derivative(&state, out)
                    .as_slice()
                    .to_vec(),
                EstimatorKind::Local => {
                    let s = &signals[agent].surrogate;
                    let local = ConsensusOutput {
                        chat: s.cp.clone(),
                        yhat: s.yp.clone(),
                    };
                    crate::estimators::ge_derivative(&state, &local)
                        .as_slice()
                        .to_vec()
                }
                EstimatorKind::DremSimple => {
                    let s = drem_simple_scalarize(out);
                    let mut v = drem_derivative(&state, &s).as_slice().to_vec();
                    v.push(s.phi * s.phi);
                    v
                }
                EstimatorKind::Drem => {
                    let bank = self.filter_bank(x, b, agent);
                    let (cf, yf) = drem_extend(out, &bank);
                    let s = drem_scalarize(&cf, &yf);
                    let mut v = drem_derivative(&state, &s).as_slice().to_vec();
                    v.push(s.phi * s.phi);
                    for dz in drem_filter_derivative(&bank, out) {
                        v.extend(dz.big.iter());
                        v.extend(dz.small.iter());
                    }
                    v
                }
                EstimatorKind::Centralized => unreachable!(),
            };
            estimators.push((off, values));
        }
        AgentDerivative {
            consensus,
            estimators,
        }
    }

    /// Writes `ẋ(t)` into `dx`.
    pub fn field(&self, t: f64, x: &[f64], inputs: &StepInputs, dx: &mut [f64]) {
        let signals = self.all_signals(t, x, inputs);
        let parts = self.map_agents(|i| self.agent_derivative(i, x, &signals, inputs));
        for (i, part) in parts.into_iter().enumerate() {
            let off = self.layout.consensus(i);
            dx[off..off + part.consensus.len()].copy_from_slice(&part.consensus);
            for (off, values) in part.estimators {
                dx[off..off + values.len()].copy_from_slice(&values);
            }
        }
        for (b, block) in self.layout.blocks.iter().enumerate() {
            if block.kind != EstimatorKind::Centralized {
                continue;
            }
            let off = self.layout.copy(b, 0);
            let theta_c = read_vector(x, off, self.n());
            // Σ C_iᵀ(y_i − C_iθ̂) equals Cᵀ(y − Cθ̂) on the stacked data.
            let mut grad = DVector::zeros(self.n());
            for s in &signals {
                grad += s.c.tr_mul(&(&s.y - &s.c * &theta_c));
            }
            let d = self.gains[b].matrix() * grad;
            dx[off..off + self.n()].copy_from_slice(d.as_slice());
        }
    }

    /// Quantized transmissions at the start of a step.
    pub fn held_transmissions(
        &self,
        t: f64,
        x: &[f64],
        inputs: &StepInputs,
    ) -> Vec<ConsensusOutput> {
        self.all_signals(t, x, inputs)
            .into_iter()
            .map(|s| s.out.quantized(self.eps))
            .collect()
    }
}

/// Initial flat state: zero consensus integrators, zero filters, and the
/// configured estimates.
pub(crate) fn initial_state(layout: &Layout, theta0: &[Vec<f64>]) -> Vec<f64> {
    let mut x = vec![0.0; layout.len];
    for block in &layout.blocks {
        for copy in 0..block.copies {
            let off = block.offset + copy * block.stride;
            let src = if block.kind == EstimatorKind::Centralized {
                &theta0[0]
            } else {
                &theta0[copy]
            };
            x[off..off + layout.n].copy_from_slice(src);
        }
    }
    x
}

/// Network averages `(C̄, ȳ)` of the surrogate data.
pub(crate) fn average_surrogate(signals: &[AgentSignals]) -> (DMatrix<f64>, DVector<f64>) {
    let n = signals[0].out.yhat.len();
    let mut big = DMatrix::zeros(n, n);
    let mut small = DVector::zeros(n);
    for s in signals {
        big += &s.surrogate.cp;
        small += &s.surrogate.yp;
    }
    let inv = 1.0 / signals.len() as f64;
    (big * inv, small * inv)
}
