use serde::{Deserialize, Serialize};

/// Verdict of the finite-horizon `φ ∉ L₂` check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    /// Every recent window added at least `floor` to `∫φ²`.
    Consistent,
    /// Too little data, or some recent window added less than `floor`.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Report {
    pub cumulative: f64,
    pub increments: Vec<f64>,
    pub verdict: Divergence,
}

/// Tracks `∫φ²` and its increments over consecutive windows.
///
/// Whether `φ ∉ L₂` cannot be decided from a finite trace; the monitor only
/// reports whether the recent windows keep adding energy.
#[derive(Clone, Debug)]
pub struct L2DivergenceMonitor {
    window: f64,
    floor: f64,
    recent: usize,
    last: Option<(f64, f64)>,
    cumulative: f64,
    window_start: f64,
    window_base: f64,
    increments: Vec<f64>,
}

impl L2DivergenceMonitor {
    /// `floor` is the minimum increment per window; `recent` how many of the
    /// latest complete windows must clear it.
    pub fn new(window: f64, floor: f64, recent: usize) -> Self {
        assert!(window > 0.0, "monitor window must be positive");
        Self {
            window,
            floor,
            recent: recent.max(1),
            last: None,
            cumulative: 0.0,
            window_start: 0.0,
            window_base: 0.0,
            increments: Vec::new(),
        }
    }

    /// Feeds one sample of `φ`; the integral uses the trapezoid rule.
    pub fn observe(&mut self, t: f64, phi: f64) {
        let cumulative = match self.last {
            None => {
                self.window_start = t;
                0.0
            }
            Some((t0, phi0)) => self.cumulative + 0.5 * (t - t0) * (phi0 * phi0 + phi * phi),
        };
        self.last = Some((t, phi));
        self.advance(t, cumulative);
    }

    /// Feeds an externally integrated `∫₀ᵗ φ²`.
    pub fn observe_cumulative(&mut self, t: f64, cumulative: f64) {
        if self.last.is_none() {
            self.window_start = t;
            self.window_base = cumulative;
        }
        self.last = Some((t, 0.0));
        self.advance(t, cumulative);
    }

    fn advance(&mut self, t: f64, cumulative: f64) {
        self.cumulative = cumulative;
        while t >= self.window_start + self.window * (1.0 - 1e-9) {
            self.increments.push(self.cumulative - self.window_base);
            self.window_base = self.cumulative;
            self.window_start += self.window;
        }
    }

    pub fn cumulative(&self) -> f64 {
        self.cumulative
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn verdict(&self) -> Divergence {
        if self.increments.len() < self.recent {
            return Divergence::Inconclusive;
        }
        let tail = &self.increments[self.increments.len() - self.recent..];
        if tail.iter().all(|&inc| inc > self.floor) {
            Divergence::Consistent
        } else {
            Divergence::Inconclusive
        }
    }

    pub fn report(&self) -> L2Report {
        L2Report {
            cumulative: self.cumulative,
            increments: self.increments.clone(),
            verdict: self.verdict(),
        }
    }
}
