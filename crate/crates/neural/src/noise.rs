//! Ornstein-Uhlenbeck exploration noise with unit time step.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuNoise {
    pub state: Vec<f64>,
    pub theta: f64,
    pub sigma: f64,
}

impl OuNoise {
    pub fn new(dim: usize, theta: f64, sigma: f64) -> Self {
        Self {
            state: vec![0.0; dim],
            theta,
            sigma,
        }
    }

    pub fn with_state(state: Vec<f64>, theta: f64, sigma: f64) -> Self {
        Self { state, theta, sigma }
    }

    /// Advances the process one step and returns the new state.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[f64] {
        for x in &mut self.state {
            let w: f64 = if self.sigma == 0.0 {
                0.0
            } else {
                rng.sample(StandardNormal)
            };
            *x += self.theta * (0.0 - *x) + self.sigma * w;
        }
        &self.state
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|x| *x = 0.0);
    }
}
