//! Dynamic regressor extension and mixing.
//!
//! The consensus output is extended with `r` first-order filters
//! `H_j = α_j / (p + β_j)`, mixed with the adjugate of the extended Gram
//! matrix, and reduced to one scalar regression `Y_μ = φ θ_μ` per parameter.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EstimatorState;
use crate::consensus::ConsensusOutput;
use crate::error::{invalid, Result};
use crate::linalg::{adjugate, det, gram};

/// One stable LTI operator `α / (p + β)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DremFilter {
    pub alpha: f64,
    pub beta: f64,
}

impl DremFilter {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha == 0.0 || !alpha.is_finite() || !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid(format!(
                "filter needs alpha != 0 and beta > 0, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }
}

/// Filtered copies of `Ĉ_i` and `ŷ_i` held by one filter.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub big: DMatrix<f64>,
    pub small: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DremFilterBank {
    pub filters: Vec<DremFilter>,
    pub states: Vec<FilterState>,
}

impl DremFilterBank {
    /// Bank with zero initial states.
    pub fn new(filters: Vec<DremFilter>, n_params: usize) -> Result<Self> {
        for f in &filters {
            DremFilter::new(f.alpha, f.beta)?;
        }
        let states = filters
            .iter()
            .map(|_| FilterState {
                big: DMatrix::zeros(n_params, n_params),
                small: DVector::zeros(n_params),
            })
            .collect();
        Ok(Self { filters, states })
    }

    /// `r = n − 1` filters with unit gain and poles at `1, 2, …`.
    pub fn default_filters(n_params: usize) -> Vec<DremFilter> {
        (1..n_params)
            .map(|j| DremFilter {
                alpha: 1.0,
                beta: j as f64,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }
}

/// `ż_j = −β_j z_j + α_j u` for both channels, `u = (Ĉ_i, ŷ_i)`.
pub fn drem_filter_derivative(bank: &DremFilterBank, out: &ConsensusOutput) -> Vec<FilterState> {
    bank.filters
        .iter()
        .zip(&bank.states)
        .map(|(f, z)| FilterState {
            big: &out.chat * f.alpha - &z.big * f.beta,
            small: &out.yhat * f.alpha - &z.small * f.beta,
        })
        .collect()
}

/// Row-stacks `Ĉ_i` on top of the filtered copies: `((r+1)n × n, (r+1)n)`.
pub fn drem_extend(out: &ConsensusOutput, bank: &DremFilterBank) -> (DMatrix<f64>, DVector<f64>) {
    let (rows, n) = out.chat.shape();
    let blocks = bank.len() + 1;
    let mut cf = DMatrix::zeros(rows * blocks, n);
    let mut yf = DVector::zeros(rows * blocks);
    cf.rows_mut(0, rows).copy_from(&out.chat);
    yf.rows_mut(0, rows).copy_from(&out.yhat);
    for (b, z) in bank.states.iter().enumerate() {
        cf.rows_mut((b + 1) * rows, rows).copy_from(&z.big);
        yf.rows_mut((b + 1) * rows, rows).copy_from(&z.small);
    }
    (cf, yf)
}

/// Mixed scalar regression of one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct DremScalar {
    pub phi: f64,
    pub y: DVector<f64>,
    /// Running `∫₀ᵗ φ² dτ`, filled in by whoever integrates it.
    pub phi_sq_integral: f64,
}

/// `φ = det(CfᵀCf)`, `Y = adj(CfᵀCf) Cfᵀ yf`.
pub fn drem_scalarize(cf: &DMatrix<f64>, yf: &DVector<f64>) -> DremScalar {
    let g = gram(cf);
    DremScalar {
        phi: det(&g),
        y: adjugate(&g) * cf.tr_mul(yf),
        phi_sq_integral: 0.0,
    }
}

/// Filter-free variant: `φ = det(Ĉ_i)`, `Y = adj(Ĉ_i) ŷ_i`.
pub fn drem_simple_scalarize(out: &ConsensusOutput) -> DremScalar {
    DremScalar {
        phi: det(&out.chat),
        y: adjugate(&out.chat) * &out.yhat,
        phi_sq_integral: 0.0,
    }
}

/// `Γ φ (Y − φ θ̂)`; with diagonal Γ every component evolves as
/// `θ̃̇_μ = −Γ_μμ φ² θ̃_μ`.
pub fn drem_derivative(s: &EstimatorState, d: &DremScalar) -> DVector<f64> {
    s.gain.matrix() * ((&d.y - &s.theta_hat * d.phi) * d.phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Gain;
    use crate::linalg::adjugate_residual;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Uniform};

    fn output(chat: DMatrix<f64>, yhat: DVector<f64>) -> ConsensusOutput {
        ConsensusOutput { chat, yhat }
    }

    /// Explicit RK4 on a single filter with constant input.
    fn run_filter(f: DremFilter, u: f64, z0: f64, t_end: f64) -> f64 {
        let mut bank = DremFilterBank::new(vec![f], 1).unwrap();
        bank.states[0].big[(0, 0)] = z0;
        bank.states[0].small[0] = z0;
        let out = output(DMatrix::from_element(1, 1, u), DVector::from_element(1, u));
        let h = 1e-3;
        let deriv = |z: f64| {
            let mut b = bank.clone();
            b.states[0].big[(0, 0)] = z;
            drem_filter_derivative(&b, &out)[0].big[(0, 0)]
        };
        let mut z = z0;
        for _ in 0..(t_end / h).round() as usize {
            let k1 = deriv(z);
            let k2 = deriv(z + h / 2.0 * k1);
            let k3 = deriv(z + h / 2.0 * k2);
            let k4 = deriv(z + h * k3);
            z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        z
    }

    #[test]
    fn filter_steady_states() {
        let f = DremFilter::new(3.0, 2.0).unwrap();
        // z(t) = (α/β) u (1 − e^{−βt})
        let z = run_filter(f, 0.8, 0.0, 2.0);
        assert_abs_diff_eq!(z, 1.5 * 0.8 * (1.0 - (-4.0_f64).exp()), epsilon = 1e-10);
        let unity = run_filter(DremFilter::new(2.5, 2.5).unwrap(), 0.7, 0.0, 20.0);
        assert_abs_diff_eq!(unity, 0.7, epsilon = 1e-12);
        let decay = run_filter(DremFilter::new(1.0, 2.0).unwrap(), 0.0, 1.0, 1.0);
        assert_abs_diff_eq!(decay, (-2.0_f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn filter_validation() {
        assert!(DremFilter::new(0.0, 1.0).is_err());
        assert!(DremFilter::new(1.0, 0.0).is_err());
        assert!(DremFilterBank::new(
            vec![DremFilter {
                alpha: 1.0,
                beta: -1.0
            }],
            2
        )
        .is_err());
        let d = DremFilterBank::default_filters(3);
        assert_eq!(
            d,
            vec![
                DremFilter {
                    alpha: 1.0,
                    beta: 1.0
                },
                DremFilter {
                    alpha: 1.0,
                    beta: 2.0
                }
            ]
        );
    }

    #[test]
    fn extension_shapes() {
        let out = output(
            DMatrix::identity(2, 2) * 3.0,
            DVector::from_vec(vec![1.0, 2.0]),
        );
        let empty = DremFilterBank::new(vec![], 2).unwrap();
        let (cf, yf) = drem_extend(&out, &empty);
        assert_eq!(cf, out.chat);
        assert_eq!(yf, out.yhat);
        let one = DremFilterBank::new(
            vec![DremFilter {
                alpha: 1.0,
                beta: 1.0,
            }],
            2,
        )
        .unwrap();
        let (cf, yf) = drem_extend(&out, &one);
        assert_eq!(cf.shape(), (4, 2));
        assert_eq!(cf.rows(2, 2).amax(), 0.0);
        assert_eq!(yf.rows(2, 2).amax(), 0.0);
    }

    #[test]
    fn scalarize_identity_and_diag() {
        let cf = DMatrix::identity(3, 3);
        let yf = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let d = drem_scalarize(&cf, &yf);
        assert_eq!(d.phi, 1.0);
        assert_eq!(d.y, yf);

        let chat = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let theta = DVector::from_vec(vec![1.0, -1.0]);
        let s = drem_simple_scalarize(&output(chat.clone(), &chat * &theta));
        assert_eq!(s.phi, 6.0);
        assert_eq!(s.y, DVector::from_vec(vec![6.0, -6.0]));
    }

    #[test]
    fn mixing_identity_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = Uniform::new(-2.0, 2.0).unwrap();
        for _ in 0..100 {
            let cf = DMatrix::from_fn(9, 3, |_, _| u.sample(&mut rng));
            let theta = DVector::from_fn(3, |_, _| u.sample(&mut rng));
            let d = drem_scalarize(&cf, &(&cf * &theta));
            let err = (&d.y - &theta * d.phi).amax();
            assert!(
                err <= 1e-9 * (d.phi.abs() * theta.amax()).max(1.0),
                "err {err}"
            );
        }
    }

    #[test]
    fn singular_output_freezes_estimate() {
        let chat = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let s = drem_simple_scalarize(&output(chat, DVector::from_vec(vec![1.0, 1.0])));
        assert_eq!(s.phi, 0.0);
        let st = EstimatorState {
            theta_hat: DVector::from_vec(vec![0.3, 0.1]),
            gain: Gain::scalar(2.0, 2).unwrap(),
        };
        assert_eq!(drem_derivative(&st, &s).amax(), 0.0);
    }

    #[test]
    fn scalar_error_closed_form() {
        // constant φ = c and Y = cθ ⇒ θ̃_μ(t) = θ̃_μ(0) e^{−Γ_μμ c² t}
        let theta = DVector::from_vec(vec![1.0, -0.5]);
        let c = 1.3;
        let d = DremScalar {
            phi: c,
            y: &theta * c,
            phi_sq_integral: 0.0,
        };
        let gain = Gain::new(DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0]))).unwrap();
        let mut th = DVector::zeros(2);
        let h = 1e-3;
        let f = |x: &DVector<f64>| {
            drem_derivative(
                &EstimatorState {
                    theta_hat: x.clone(),
                    gain: gain.clone(),
                },
                &d,
            )
        };
        for _ in 0..1000 {
            let k1 = f(&th);
            let k2 = f(&(&th + &k1 * (h / 2.0)));
            let k3 = f(&(&th + &k2 * (h / 2.0)));
            let k4 = f(&(&th + &k3 * h));
            th += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        for (mu, g) in [0.5_f64, 2.0].iter().enumerate() {
            let expected = -theta[mu] * (-g * c * c).exp();
            assert_abs_diff_eq!(th[mu] - theta[mu], expected, epsilon = 1e-12);
        }
        let at_fixed = EstimatorState {
            theta_hat: theta.clone(),
            gain,
        };
        assert!(drem_derivative(&at_fixed, &d).amax() < 1e-15);
    }

    #[test]
    fn adjugate_residual_small() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        assert!(adjugate_residual(&m) < 1e-14);
        assert_abs_diff_eq!(
            &adjugate(&m) * &m,
            DMatrix::identity(3, 3) * det(&m),
            epsilon = 1e-12
        );
    }
}
