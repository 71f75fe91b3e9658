//! Regressor generation, measurement synthesis, surrogate regressions and
//! the communication quantizer.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::gram;

/// Independent random streams derived from one scenario seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamPurpose {
    Coefficients = 1,
    SensorNoise = 2,
    LinkLoss = 3,
}

/// Counter-based stream for `(agent, purpose)`; enabling one purpose never
/// shifts the draws of another.
pub fn rng_stream(seed: u64, agent: usize, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | agent as u64);
    rng
}

/// One regressor entry `a + b·sin(ωt) + d·cos(ωt)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub omega: f64,
}

impl Sinusoid {
    pub const ZERO: Sinusoid = Sinusoid {
        a: 0.0,
        b: 0.0,
        d: 0.0,
        omega: 0.0,
    };

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        let (s, c) = (self.omega * t).sin_cos();
        self.a + self.b * s + self.d * c
    }

    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        let (s, c) = (self.omega * t).sin_cos();
        self.omega * (self.b * c - self.d * s)
    }

    /// Upper bound on |value| over all t.
    pub fn amplitude_bound(&self) -> f64 {
        self.a.abs() + self.b.abs() + self.d.abs()
    }
}

/// Closed interval `[lo, hi]` for uniform sampling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    fn check(self, what: &str) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite()) || self.0 > self.1 {
            return Err(invalid(format!(
                "{what} range [{}, {}] is empty or not finite",
                self.0, self.1
            )));
        }
        Ok(())
    }
}

/// Per-agent time-varying regressors built from sinusoid tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressorGenerator {
    n_params: usize,
    rows_per_agent: Vec<usize>,
    /// `coeffs[agent][row * n_params + col]`
    coeffs: Vec<Vec<Sinusoid>>,
    seed: u64,
}

impl RegressorGenerator {
    /// Draws every `(A, B, D)` i.i.d. uniform from `coeff_range` and every
    /// `ω` from `freq_range`, one coefficient stream per agent.
    pub fn sample(
        n_params: usize,
        rows_per_agent: &[usize],
        coeff_range: Range,
        freq_range: Range,
        seed: u64,
    ) -> Result<Self> {
        if n_params == 0 {
            return Err(invalid("number of parameters must be positive"));
        }
        if rows_per_agent.is_empty() || rows_per_agent.contains(&0) {
            return Err(invalid("every agent needs at least one regressor row"));
        }
        coeff_range.check("coefficient")?;
        freq_range.check("frequency")?;
        let coeff = Uniform::new_inclusive(coeff_range.0, coeff_range.1)
            .map_err(|e| invalid(e.to_string()))?;
        let freq = Uniform::new_inclusive(freq_range.0, freq_range.1)
            .map_err(|e| invalid(e.to_string()))?;

        let coeffs = rows_per_agent
            .iter()
            .enumerate()
            .map(|(agent, &rows)| {
                let mut rng = rng_stream(seed, agent, StreamPurpose::Coefficients);
                (0..rows * n_params)
                    .map(|_| Sinusoid {
                        a: coeff.sample(&mut rng),
                        b: coeff.sample(&mut rng),
                        d: coeff.sample(&mut rng),
                        omega: freq.sample(&mut rng),
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            n_params,
            rows_per_agent: rows_per_agent.to_vec(),
            coeffs,
            seed,
        })
    }

    /// Generator from an explicit coefficient table (e.g. a dumped sidecar).
    pub fn from_table(n_params: usize, coeffs: Vec<Vec<Vec<Sinusoid>>>) -> Result<Self> {
        if n_params == 0 || coeffs.is_empty() {
            return Err(invalid("empty coefficient table"));
        }
        let mut rows_per_agent = Vec::with_capacity(coeffs.len());
        let mut flat = Vec::with_capacity(coeffs.len());
        for (agent, rows) in coeffs.into_iter().enumerate() {
            if rows.is_empty() || rows.iter().any(|r| r.len() != n_params) {
                return Err(Error::DimensionMismatch(format!(
                    "agent {agent}: every row needs {n_params} entries"
                )));
            }
            rows_per_agent.push(rows.len());
            flat.push(rows.into_iter().flatten().collect());
        }
        Ok(Self {
            n_params,
            rows_per_agent,
            coeffs: flat,
            seed: 0,
        })
    }

    /// Zeroes every column of `agent`'s regressor outside `columns`.
    pub fn restrict_columns(&mut self, agent: usize, columns: &[usize]) -> Result<()> {
        self.check_agent(agent)?;
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.n_params) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.n_params,
            });
        }
        let n = self.n_params;
        for (k, s) in self.coeffs[agent].iter_mut().enumerate() {
            if !columns.contains(&(k % n)) {
                *s = Sinusoid::ZERO;
            }
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_agents(&self) -> usize {
        self.rows_per_agent.len()
    }

    pub fn rows(&self, agent: usize) -> usize {
        self.rows_per_agent[agent]
    }

    pub fn rows_per_agent(&self) -> &[usize] {
        &self.rows_per_agent
    }

    pub fn total_rows(&self) -> usize {
        self.rows_per_agent.iter().sum()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Coefficient table of one agent as `[row][col]`.
    pub fn table(&self, agent: usize) -> Vec<Vec<Sinusoid>> {
        self.coeffs[agent]
            .chunks(self.n_params)
            .map(<[Sinusoid]>::to_vec)
            .collect()
    }

    pub fn entry(&self, agent: usize, row: usize, col: usize) -> Sinusoid {
        self.coeffs[agent][row * self.n_params + col]
    }

    fn check_agent(&self, agent: usize) -> Result<()> {
        if agent >= self.n_agents() {
            return Err(Error::IndexOutOfRange {
                index: agent,
                len: self.n_agents(),
            });
        }
        Ok(())
    }

    /// `C_i(t)`.
    pub fn evaluate(&self, agent: usize, t: f64) -> Result<DMatrix<f64>> {
        self.check_agent(agent)?;
        Ok(self.eval_unchecked(agent, t, Sinusoid::value))
    }

    /// `Ċ_i(t)` from the analytic derivative of every entry.
    pub fn evaluate_derivative(&self, agent: usize, t: f64) -> Result<DMatrix<f64>> {
        self.check_agent(agent)?;
        Ok(self.eval_unchecked(agent, t, Sinusoid::derivative))
    }

    pub(crate) fn eval_unchecked(
        &self,
        agent: usize,
        t: f64,
        f: fn(&Sinusoid, f64) -> f64,
    ) -> DMatrix<f64> {
        let n = self.n_params;
        let table = &self.coeffs[agent];
        DMatrix::from_fn(self.rows_per_agent[agent], n, |r, c| {
            f(&table[r * n + c], t)
        })
    }

    /// Per-row bound `Σ_c (|A| + |B| + |D|)` on the absolute row sum.
    pub fn row_bounds(&self, agent: usize) -> Vec<f64> {
        self.coeffs[agent]
            .chunks(self.n_params)
            .map(|row| row.iter().map(Sinusoid::amplitude_bound).sum())
            .collect()
    }

    /// Stacked regressor `C(t) = col(C_i(t))`.
    pub fn stacked(&self, t: f64) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.total_rows(), self.n_params);
        let mut row = 0;
        for agent in 0..self.n_agents() {
            let ci = self.eval_unchecked(agent, t, Sinusoid::value);
            c.rows_mut(row, ci.nrows()).copy_from(&ci);
            row += ci.nrows();
        }
        c
    }

    /// Sensor reading `y_i = C_i(t)θ + η` with `η ~ N(0, noise_sd²)` per
    /// component, drawn from `rng` when `noise_sd > 0`.
    pub fn measure<R: Rng>(
        &self,
        theta: &DVector<f64>,
        agent: usize,
        t: f64,
        noise_sd: f64,
        rng: &mut R,
    ) -> Result<Measurement> {
        let c = self.evaluate(agent, t)?;
        if theta.len() != self.n_params {
            return Err(Error::DimensionMismatch(format!(
                "theta has {} entries, regressor has {} columns",
                theta.len(),
                self.n_params
            )));
        }
        let mut y = &c * theta;
        if noise_sd > 0.0 {
            y += sample_noise(c.nrows(), noise_sd, rng);
        }
        Ok(Measurement { y, c, t })
    }
}

/// `len` i.i.d. `N(0, sd²)` draws.
pub fn sample_noise<R: Rng>(len: usize, sd: f64, rng: &mut R) -> DVector<f64> {
    let normal =
        Normal::new(0.0, sd).expect("noise standard deviation must be finite and non-negative");
    DVector::from_fn(len, |_, _| normal.sample(rng))
}

/// A sensor reading of one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub y: DVector<f64>,
    pub c: DMatrix<f64>,
    pub t: f64,
}

/// Surrogate regression `C' = CᵀC`, `y' = Cᵀy` (common n×n / n shape for
/// every agent, same solution set as the original regression).
#[derive(Clone, Debug, PartialEq)]
pub struct Surrogate {
    pub cp: DMatrix<f64>,
    pub yp: DVector<f64>,
}

pub fn surrogate(m: &Measurement) -> Surrogate {
    surrogate_of(&m.c, &m.y)
}

pub fn surrogate_of(c: &DMatrix<f64>, y: &DVector<f64>) -> Surrogate {
    Surrogate {
        cp: gram(c),
        yp: c.tr_mul(y),
    }
}

/// Row-stacks measurements in agent order into `(C, y)`.
pub fn stack_centralized(ms: &[Measurement]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let first = ms
        .first()
        .ok_or_else(|| invalid("no measurements to stack"))?;
    let n = first.c.ncols();
    let mut p = 0;
    for (i, m) in ms.iter().enumerate() {
        if m.c.ncols() != n || m.c.nrows() != m.y.len() {
            return Err(Error::DimensionMismatch(format!(
                "measurement {i} is {}x{} with {} outputs, expected {n} columns",
                m.c.nrows(),
                m.c.ncols(),
                m.y.len()
            )));
        }
        p += m.c.nrows();
    }
    let mut c = DMatrix::zeros(p, n);
    let mut y = DVector::zeros(p);
    let mut row = 0;
    for m in ms {
        let rows = m.c.nrows();
        c.rows_mut(row, rows).copy_from(&m.c);
        y.rows_mut(row, rows).copy_from(&m.y);
        row += rows;
    }
    Ok((c, y))
}

/// Floor quantizer `Q(s) = ε⌊s/ε⌋`; `ε = 0` is the identity.
#[inline]
pub fn quantize(s: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        return s;
    }
    // the division can round across an integer; pin m so that
    // eps·m <= s < eps·(m + 1) holds for the products as computed
    let mut m = (s / eps).floor();
    if eps * m > s {
        m -= 1.0;
    } else if eps * (m + 1.0) <= s {
        m += 1.0;
    }
    eps * m
}

pub fn quantize_matrix(m: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    m.map(|s| quantize(s, eps))
}

pub fn quantize_vector(v: &DVector<f64>, eps: f64) -> DVector<f64> {
    v.map(|s| quantize(s, eps))
}
