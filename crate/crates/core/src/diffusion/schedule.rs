use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric noise schedule on `t ∈ [0, 1]`:
/// `σ(t) = σ_min (σ_max/σ_min)^t`, `g(t) = σ(t) √(2 ln(σ_max/σ_min))`,
/// discretised into `steps` intervals of `Δt = (1 − ε)/steps` from `t = 1`
/// down to `t = ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    sigma_min: f64,
    sigma_max: f64,
    steps: usize,
    epsilon: f64,
}

pub fn make_schedule(sigma_min: f64, sigma_max: f64, steps: usize, epsilon: f64) -> Result<NoiseSchedule> {
    NoiseSchedule::new(sigma_min, sigma_max, steps, epsilon)
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, steps: usize, epsilon: f64) -> Result<Self> {
        if !(sigma_min > 0.0) || !sigma_min.is_finite() {
            return Err(Error::invalid(format!("sigma_min must be positive, got {sigma_min}")));
        }
        if !(sigma_max > sigma_min) || !sigma_max.is_finite() {
            return Err(Error::invalid(format!(
                "sigma_max ({sigma_max}) must exceed sigma_min ({sigma_min})"
            )));
        }
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        Ok(Self {
            sigma_min,
            sigma_max,
            steps,
            epsilon,
        })
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dt(&self) -> f64 {
        (1.0 - self.epsilon) / self.steps as f64
    }

    /// `√(2 ln(σ_max/σ_min))`, the constant ratio `g(t)/σ(t)`.
    pub fn g_over_sigma(&self) -> f64 {
        (2.0 * (self.sigma_max / self.sigma_min).ln()).sqrt()
    }

    pub fn sigma(&self, t: f64) -> f64 {
        self.sigma_min * (self.sigma_max / self.sigma_min).powf(t)
    }

    pub fn g(&self, t: f64) -> f64 {
        self.sigma(t) * self.g_over_sigma()
    }

    /// Time after `step` decrements: `t_step = 1 − step·Δt`, so `t_0 = 1` and
    /// `t_steps = ε`.
    pub fn time(&self, step: usize) -> f64 {
        if step >= self.steps {
            self.epsilon
        } else {
            1.0 - step as f64 * self.dt()
        }
    }

    /// The discrete grid `1, 1 − Δt, …, ε` (length `steps + 1`).
    pub fn grid(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }
}
