use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EstimatorState;
use crate::consensus::ConsensusOutput;
use crate::error::{invalid, Result};
use crate::linalg::{asymmetry, sym_min_eigenvalue};

/// Gain as written in a scenario file: a scalar (`γI`), a diagonal, or a
/// full symmetric matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl GainSpec {
    pub fn to_gain(&self, n: usize) -> Result<Gain> {
        let m = match self {
            GainSpec::Scalar(g) => DMatrix::identity(n, n) * *g,
            GainSpec::Diagonal(d) => {
                if d.len() != n {
                    return Err(invalid(format!(
                        "diagonal gain has {} entries, expected {n}",
                        d.len()
                    )));
                }
                DMatrix::from_diagonal(&DVector::from_column_slice(d))
            }
            GainSpec::Full(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(invalid(format!("full gain must be {n}x{n}")));
                }
                DMatrix::from_fn(n, n, |r, c| rows[r][c])
            }
        };
        Gain::new(m)
    }
}

/// Symmetric positive-definite gain matrix Γ.
#[derive(Clone, Debug, PartialEq)]
pub struct Gain(DMatrix<f64>);

impl Gain {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.is_empty() {
            return Err(invalid("gain must be a non-empty square matrix"));
        }
        if m.iter().any(|v| !v.is_finite()) || asymmetry(&m) > 0.0 {
            return Err(invalid("gain must be finite and symmetric"));
        }
        if !(sym_min_eigenvalue(&m) > 0.0) {
            return Err(invalid("gain must be positive definite"));
        }
        Ok(Self(m))
    }

    pub fn scalar(g: f64, n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n) * g)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.0.nrows();
        (0..n).all(|r| (0..n).all(|c| r == c || self.0[(r, c)] == 0.0))
    }
}

/// `Γ Ĉᵀ(ŷ − Ĉθ̂)`.
pub fn ge_derivative(s: &EstimatorState, out: &ConsensusOutput) -> DVector<f64> {
    let innovation = &out.yhat - &out.chat * &s.theta_hat;
    s.gain.matrix() * out.chat.tr_mul(&innovation)
}

/// Centralized baseline `Γ_c Cᵀ(y − Cθ̂_c)` on the stacked data.
pub fn centralized_ge_derivative(
    theta_c: &DVector<f64>,
    c: &DMatrix<f64>,
    y: &DVector<f64>,
    gain: &Gain,
) -> DVector<f64> {
    gain.matrix() * c.tr_mul(&(y - c * theta_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Uniform};

    fn state(theta: &[f64]) -> EstimatorState {
        EstimatorState {
            theta_hat: DVector::from_column_slice(theta),
            gain: Gain::scalar(1.0, theta.len()).unwrap(),
        }
    }

    #[test]
    fn fixed_point_and_no_information() {
        let chat = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let s = state(&[0.4, -1.2]);
        let out = ConsensusOutput {
            yhat: &chat * &s.theta_hat,
            chat,
        };
        assert!(ge_derivative(&s, &out).amax() < 1e-15);
        let blind = ConsensusOutput {
            chat: DMatrix::zeros(2, 2),
            yhat: DVector::from_vec(vec![5.0, 1.0]),
        };
        assert_eq!(ge_derivative(&s, &blind).amax(), 0.0);
    }

    #[test]
    fn identity_regressor_closed_form() {
        // θ̂' = θ − θ̂ ⇒ θ̂(t) = θ + e^{−t}(θ̂(0) − θ); explicit RK4 on the
        // derivative reproduces it.
        let theta = DVector::from_vec(vec![1.0, -2.0]);
        let out = ConsensusOutput {
            chat: DMatrix::identity(2, 2),
            yhat: theta.clone(),
        };
        let mut s = state(&[0.5, 0.5]);
        let h = 0.01;
        let f = |th: &DVector<f64>| {
            ge_derivative(
                &EstimatorState {
                    theta_hat: th.clone(),
                    gain: s.gain.clone(),
                },
                &out,
            )
        };
        for _ in 0..100 {
            let k1 = f(&s.theta_hat);
            let k2 = f(&(&s.theta_hat + &k1 * (h / 2.0)));
            let k3 = f(&(&s.theta_hat + &k2 * (h / 2.0)));
            let k4 = f(&(&s.theta_hat + &k3 * h));
            s.theta_hat += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        let expected = &theta + (DVector::from_vec(vec![0.5, 0.5]) - &theta) * (-1.0_f64).exp();
        assert_abs_diff_eq!(s.theta_hat, expected, epsilon = 1e-9);
    }

    #[test]
    fn centralized_cases() {
        let gain = Gain::scalar(1.0, 2).unwrap();
        let c = DMatrix::identity(2, 2);
        let theta = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(
            centralized_ge_derivative(&theta, &c, &(&c * &theta), &gain).amax(),
            0.0
        );
        // from θ̂ = 0: derivative = θ, i.e. θ̂(t) = (1 − e^{−t})θ at t = 0
        assert_eq!(
            centralized_ge_derivative(&DVector::zeros(2), &c, &theta, &gain),
            theta
        );
    }

    #[test]
    fn error_dynamics_two_ways() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = Uniform::new(-2.0, 2.0).unwrap();
        for _ in 0..100 {
            let c = DMatrix::from_fn(5, 3, |_, _| u.sample(&mut rng));
            let theta = DVector::from_fn(3, |_, _| u.sample(&mut rng));
            let theta_hat = DVector::from_fn(3, |_, _| u.sample(&mut rng));
            let a = DMatrix::from_fn(3, 3, |_, _| u.sample(&mut rng));
            let gain = Gain::new(&a * a.transpose() + DMatrix::identity(3, 3)).unwrap();
            let direct = centralized_ge_derivative(&theta_hat, &c, &(&c * &theta), &gain);
            let via_error = -(gain.matrix() * c.transpose() * &c * (&theta_hat - &theta));
            assert!((direct - via_error).amax() < 1e-12);
        }
    }

    #[test]
    fn gain_validation() {
        assert!(GainSpec::Scalar(0.0).to_gain(2).is_err());
        assert!(GainSpec::Diagonal(vec![1.0, -1.0]).to_gain(2).is_err());
        assert!(GainSpec::Diagonal(vec![1.0]).to_gain(2).is_err());
        assert!(GainSpec::Full(vec![vec![1.0, 0.5], vec![0.4, 1.0]])
            .to_gain(2)
            .is_err());
        let full = GainSpec::Full(vec![vec![2.0, 0.5], vec![0.5, 1.0]])
            .to_gain(2)
            .unwrap();
        assert!(!full.is_diagonal());
        assert!(GainSpec::Diagonal(vec![1.0, 3.0])
            .to_gain(2)
            .unwrap()
            .is_diagonal());
        let parsed: GainSpec = serde_json::from_str("[0.1, 0.2]").unwrap();
        assert_eq!(parsed, GainSpec::Diagonal(vec![0.1, 0.2]));
        let parsed: GainSpec = serde_json::from_str("0.5").unwrap();
        assert_eq!(parsed, GainSpec::Scalar(0.5));
    }
}
