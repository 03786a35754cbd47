use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionKind {
    /// One detuning per epoch (or for the whole stream when no epoch is set).
    FrozenGaussian,
    /// Fresh detuning from the stationary Gaussian at Poisson-distributed times.
    JumpProcess,
}

/// Stochastic law of the emitter detuning during a simulated stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionProcess {
    pub kind: DiffusionKind,
    /// Standard deviation of the stationary Gaussian, rad/s.
    pub sigma: f64,
    /// Resampling rate of the jump process, 1/s.
    pub jump_rate: f64,
    /// Resampling period of the frozen Gaussian, s.
    pub epoch: Option<f64>,
    pub seed: u64,
}

impl DiffusionProcess {
    pub fn none(seed: u64) -> Self {
        Self::frozen(0.0, seed)
    }

    pub fn frozen(sigma: f64, seed: u64) -> Self {
        DiffusionProcess {
            kind: DiffusionKind::FrozenGaussian,
            sigma,
            jump_rate: 0.0,
            epoch: None,
            seed,
        }
    }

    pub fn frozen_epochs(sigma: f64, epoch: f64, seed: u64) -> Self {
        DiffusionProcess {
            epoch: Some(epoch),
            ..Self::frozen(sigma, seed)
        }
    }

    pub fn jumps(sigma: f64, jump_rate: f64, seed: u64) -> Self {
        DiffusionProcess {
            kind: DiffusionKind::JumpProcess,
            sigma,
            jump_rate,
            epoch: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid("diffusion sigma must be finite and >= 0"));
        }
        if !(self.jump_rate.is_finite() && self.jump_rate >= 0.0) {
            return Err(Error::invalid("jump rate must be finite and >= 0"));
        }
        if let Some(e) = self.epoch {
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::invalid("frozen-Gaussian epoch must be > 0"));
            }
        }
        Ok(())
    }

    /// Piecewise-constant detuning over `[0, duration)` as `(start, delta)` pairs.
    pub(crate) fn schedule(&self, duration: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
        if self.sigma == 0.0 {
            return vec![(0.0, 0.0)];
        }
        let normal = Normal::new(0.0, self.sigma).expect("sigma validated");
        let mut out = vec![(0.0, normal.sample(rng))];
        match self.kind {
            DiffusionKind::FrozenGaussian => {
                if let Some(epoch) = self.epoch {
                    let mut k = 1u64;
                    while (k as f64) * epoch < duration {
                        out.push((k as f64 * epoch, normal.sample(rng)));
                        k += 1;
                    }
                }
            }
            DiffusionKind::JumpProcess => {
                if self.jump_rate > 0.0 {
                    let wait = Exp::new(self.jump_rate).expect("rate validated");
                    let mut t = wait.sample(rng);
                    while t < duration {
                        out.push((t, normal.sample(rng)));
                        t += wait.sample(rng);
                    }
                }
            }
        }
        out
    }
}

/// Uniform draw in `(0, 1]`, usable as a survival threshold.
pub(crate) fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.gen::<f64>()
}
