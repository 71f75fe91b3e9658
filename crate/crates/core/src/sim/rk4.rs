//! Classical fixed-step Runge–Kutta on flat state vectors.

use crate::error::{Error, Result};

/// Reusable stage buffers for one state dimension.
#[derive(Clone, Debug)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `state` from `t` to `t + h` in place. Fails when any
    /// component of the result is not finite.
    pub fn step<F>(&mut self, mut field: F, t: f64, h: f64, state: &mut [f64]) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let dim = state.len();
        if self.k1.len() != dim {
            *self = Self::new(dim);
        }
        field(t, state, &mut self.k1);
        for i in 0..dim {
            self.tmp[i] = state[i] + 0.5 * h * self.k1[i];
        }
        field(t + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..dim {
            self.tmp[i] = state[i] + 0.5 * h * self.k2[i];
        }
        field(t + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..dim {
            self.tmp[i] = state[i] + h * self.k3[i];
        }
        field(t + h, &self.tmp, &mut self.k4);
        for i in 0..dim {
            state[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        if let Some(idx) = state.iter().position(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                t: t + h,
                signal: format!("state[{idx}]"),
                value: state[idx],
            });
        }
        Ok(())
    }
}

/// One RK4 step returning the new state.
pub fn rk4_step<F>(field: F, state: &[f64], t: f64, h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut next = state.to_vec();
    Rk4::new(state.len()).step(field, t, h, &mut next)?;
    Ok(next)
}
