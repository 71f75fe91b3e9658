//! Persistence of excitation, regularity bounds, and the gain / feasibility
//! formulas that tie them to the consensus design.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{gram, mean_matrix, spectral_norm, sym_min_eigenvalue};
use crate::par::Execution;
use crate::signals::{RegressorGenerator, Sinusoid};

/// Result of a sliding-window excitation scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeWitness {
    /// `min` over windows of `λ_min(∫ FᵀF)`, clamped at zero.
    pub alpha: f64,
    pub window: f64,
    /// Effective quadrature step (the requested step, adjusted so the window
    /// holds a whole number of steps).
    pub grid_step: f64,
    pub horizon: f64,
    /// `λ_min` of each window's Gram integral, by window start.
    #[serde(skip)]
    pub min_eig_trace: Vec<f64>,
}

/// Excitation level of `signal` over `[0, horizon]` for windows of length
/// `window`.
///
/// The window start slides over `[0, horizon − window]` at grid resolution
/// and each window's Gram integral is a composite trapezoid at `grid_step`.
/// Prefix sums make every window O(1) after one pass over the grid.
pub fn pe_level<F>(
    signal: F,
    window: f64,
    horizon: f64,
    grid_step: f64,
    exec: Execution,
) -> Result<PeWitness>
where
    F: Fn(f64) -> DMatrix<f64> + Sync + Send,
{
    if !(window > 0.0 && window.is_finite()) {
        return Err(invalid(format!("degenerate window T = {window}")));
    }
    if !(grid_step > 0.0) || grid_step > window / 10.0 * (1.0 + 1e-12) {
        return Err(invalid(format!(
            "grid step {grid_step} too coarse for window {window} (need <= T/10)"
        )));
    }
    if !(horizon >= window) {
        return Err(invalid(format!(
            "horizon {horizon} shorter than window {window}"
        )));
    }

    let per_window = (window / grid_step).round() as usize;
    let step = window / per_window as f64;
    let n_points = (horizon / step + 1e-9).floor() as usize + 1;

    let grams = exec.map_range(n_points, |j| {
        let f = signal(j as f64 * step);
        gram(&f)
    });

    let dim = grams[0].nrows();
    let mut prefix = Vec::with_capacity(n_points);
    prefix.push(DMatrix::zeros(dim, dim));
    for j in 1..n_points {
        let next = &prefix[j - 1] + (&grams[j - 1] + &grams[j]) * (0.5 * step);
        prefix.push(next);
    }

    let n_windows = n_points - per_window;
    let min_eig_trace = exec.map_range(n_windows, |s| {
        let w = &prefix[s + per_window] - &prefix[s];
        sym_min_eigenvalue(&w)
    });
    let alpha = min_eig_trace
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(0.0);

    Ok(PeWitness {
        alpha,
        window,
        grid_step: step,
        horizon,
        min_eig_trace,
    })
}

/// `α(T)` over a list of windows, each scanned at `T / grid_divisions`.
pub fn pe_curve<F>(
    signal: F,
    windows: &[f64],
    horizon: f64,
    grid_divisions: usize,
    exec: Execution,
) -> Result<Vec<PeWitness>>
where
    F: Fn(f64) -> DMatrix<f64> + Sync + Send,
{
    if grid_divisions < 10 {
        return Err(invalid("grid_divisions must be at least 10"));
    }
    windows
        .iter()
        .map(|&w| pe_level(&signal, w, horizon, w / grid_divisions as f64, exec))
        .collect()
}

/// Sampled suprema from the regularity assumption on the surrogate data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionBounds {
    /// `max_t ‖C̄(t)‖`
    pub beta: f64,
    /// `max_t ‖(H ⊗ I_n) Ċ'(t)‖`
    pub gamma: f64,
}

impl AssumptionBounds {
    pub fn inflated(self, factor: f64) -> Self {
        Self {
            beta: self.beta * factor,
            gamma: self.gamma * factor,
        }
    }
}

/// Estimates β and γ as maxima over a uniform grid on `[0, horizon]`.
///
/// Grid suprema underestimate the true suprema; callers inflate them.
pub fn estimate_assumption_bounds(
    gen: &RegressorGenerator,
    horizon: f64,
    grid_step: f64,
    exec: Execution,
) -> Result<AssumptionBounds> {
    if !(grid_step > 0.0) || !(horizon >= 0.0) {
        return Err(invalid(
            "grid step must be positive and horizon non-negative",
        ));
    }
    let n_points = (horizon / grid_step + 1e-9).floor() as usize + 1;
    let n_agents = gen.n_agents();
    let per_point = exec.map_range(n_points, |j| {
        let t = j as f64 * grid_step;
        let mut cps = Vec::with_capacity(n_agents);
        let mut dcps = Vec::with_capacity(n_agents);
        for agent in 0..n_agents {
            let c = gen.eval_unchecked(agent, t, Sinusoid::value);
            let dc = gen.eval_unchecked(agent, t, Sinusoid::derivative);
            let cross = dc.tr_mul(&c);
            dcps.push(&cross + cross.transpose());
            cps.push(gram(&c));
        }
        let beta = spectral_norm(&mean_matrix(&cps));
        // ‖(H⊗I)Ċ'‖ for the stacked Nn×n matrix: sqrt(λ_max(Σ DᵢᵀDᵢ))
        let mean_d = mean_matrix(&dcps);
        let n = mean_d.nrows();
        let mut acc = DMatrix::zeros(n, n);
        for d in &dcps {
            let dev = d - &mean_d;
            acc += dev.tr_mul(&dev);
        }
        let gamma = crate::linalg::sym_eigenvalues(&acc)
            .last()
            .copied()
            .unwrap_or(0.0)
            .max(0.0)
            .sqrt();
        (beta, gamma)
    });
    let (beta, gamma) = per_point
        .into_iter()
        .fold((0.0_f64, 0.0_f64), |(b, g), (pb, pg)| {
            (b.max(pb), g.max(pg))
        });
    Ok(AssumptionBounds { beta, gamma })
}

/// Everything the gain and feasibility formulas need.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcitationConstants {
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// PE window length T.
    pub window: f64,
    pub n_params: usize,
    pub n_agents: usize,
}

impl ExcitationConstants {
    fn check(&self) -> Result<()> {
        let finite = [self.beta, self.gamma, self.alpha, self.window]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(invalid(
                "excitation constants must be finite with beta, gamma >= 0",
            ));
        }
        if self.n_params == 0 || self.n_agents == 0 {
            return Err(invalid("dimensions must be positive"));
        }
        if !(self.window > 0.0) {
            return Err(invalid(format!(
                "window T must be positive, got {}",
                self.window
            )));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::NotPersistentlyExciting(format!(
                "alpha = {} for window T = {}",
                self.alpha, self.window
            )));
        }
        Ok(())
    }

    /// `α² / (T N²)`, the left-hand side of the feasibility inequalities.
    fn pe_budget(&self) -> f64 {
        avg_gram_pe_level(self.alpha, self.window, self.n_agents)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// Smallest admissible consensus gain: `2 n N² β γ T² / (λ_G α²)`.
pub fn gain_bound(c: &ExcitationConstants, lambda_g: f64) -> Result<f64> {
    c.check()?;
    check_positive("lambda_g", lambda_g)?;
    let n = c.n_params as f64;
    let big_n = c.n_agents as f64;
    Ok(
        2.0 * n * big_n * big_n * c.beta * c.gamma * c.window * c.window
            / (lambda_g * c.alpha * c.alpha),
    )
}

/// Excitation level `α² / (T N²)` guaranteed for `C̄(t)²`.
pub fn avg_gram_pe_level(alpha: f64, window: f64, n_agents: usize) -> f64 {
    alpha * alpha / (window * (n_agents * n_agents) as f64)
}

/// Asymptotic per-agent consensus error ceiling `n γ / (k λ_G)`.
pub fn consensus_error_bound(n_params: usize, gamma: f64, k: f64, lambda_g: f64) -> Result<f64> {
    check_positive("k", k)?;
    check_positive("lambda_g", lambda_g)?;
    Ok(n_params as f64 * gamma / (k * lambda_g))
}

/// Quantized-consensus diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedBounds {
    pub feasible: bool,
    /// LHS − RHS of the feasibility inequality.
    pub margin: f64,
    /// Ultimate bound on `‖C̃_i‖`.
    pub b_eps: f64,
    /// Ultimate bound on the stacked residual `‖r‖`.
    pub r_eps: f64,
}

fn feasibility_margin(
    c: &ExcitationConstants,
    k: f64,
    lambda_lo: f64,
    lambda_hi: f64,
    eps: f64,
) -> f64 {
    let n = c.n_params as f64;
    let big_n = c.n_agents as f64;
    let rhs = 2.0
        * c.beta
        * c.window
        * (n * c.gamma / (k * lambda_lo) + n * n * big_n.sqrt() * lambda_hi * eps / lambda_lo);
    c.pe_budget() - rhs
}

/// Feasibility of `(k, ε)` on a fixed graph plus the ultimate bounds on the
/// consensus error and the regression residual.
pub fn quantized_bounds(
    c: &ExcitationConstants,
    k: f64,
    lambda_g: f64,
    lambda_max: f64,
    eps: f64,
    theta_norm: f64,
) -> Result<QuantizedBounds> {
    c.check()?;
    check_positive("k", k)?;
    check_positive("lambda_g", lambda_g)?;
    if !(eps >= 0.0) || !(lambda_max >= lambda_g) {
        return Err(invalid("need eps >= 0 and lambda_max >= lambda_g"));
    }
    let n = c.n_params as f64;
    let big_n = c.n_agents as f64;
    let margin = feasibility_margin(c, k, lambda_g, lambda_max, eps);
    let b_eps = n * c.gamma / (k * lambda_g) + eps * n * n * big_n.sqrt() * lambda_max / lambda_g;
    let r_eps = eps * (n * big_n).sqrt() * lambda_max * (n.sqrt() * theta_norm + 1.0) / lambda_g;
    Ok(QuantizedBounds {
        feasible: margin > 0.0,
        margin,
        b_eps,
        r_eps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub margin: f64,
}

/// Feasibility over a switched family: worst-case connectivity `λ_{G,m}` in
/// the denominators, largest Laplacian eigenvalue `λ_{G,M}` in the
/// quantization term.
pub fn switched_feasibility(
    c: &ExcitationConstants,
    k: f64,
    lambda_g_min: f64,
    lambda_max_max: f64,
    eps: f64,
) -> Result<Feasibility> {
    c.check()?;
    check_positive("k", k)?;
    check_positive("lambda_g_min", lambda_g_min)?;
    if !(eps >= 0.0) {
        return Err(invalid("eps must be non-negative"));
    }
    let margin = feasibility_margin(c, k, lambda_g_min, lambda_max_max, eps);
    Ok(Feasibility {
        feasible: margin > 0.0,
        margin,
    })
}
