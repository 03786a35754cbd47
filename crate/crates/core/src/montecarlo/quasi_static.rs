use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{emission_rate_for, g2_for};
use crate::error::{Error, Result};
use crate::types::{DetuningDistribution, EmitterParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiStaticEstimate {
    pub tau_grid: Vec<f64>,
    pub g2: Vec<f64>,
    pub std_error: Vec<f64>,
}

pub const MIN_QUASI_STATIC_SAMPLES: usize = 100;

/// Sampled version of the diffusion average: draw detunings from `dist`,
/// weight each by `C(Δ)^2` and form the ratio estimate of the weighted mean
/// correlation. Standard errors use the delta method for a ratio.
pub fn quasi_static_average(
    params: &EmitterParams,
    dist: &DetuningDistribution,
    tau_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<QuasiStaticEstimate> {
    params.validate()?;
    if n_samples < MIN_QUASI_STATIC_SAMPLES {
        return Err(Error::invalid(format!(
            "quasi-static average needs at least {MIN_QUASI_STATIC_SAMPLES} samples"
        )));
    }
    let (gamma, gp, omega) = (params.gamma(), params.gamma_perp(), params.omega());
    if dist.is_degenerate() {
        let d = params.delta() + dist.mean();
        return Ok(QuasiStaticEstimate {
            tau_grid: tau_grid.to_vec(),
            g2: tau_grid.iter().map(|&t| g2_for(gamma, gp, omega.hypot(d), t).value).collect(),
            std_error: vec![0.0; tau_grid.len()],
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(params.delta() + dist.mean(), dist.sigma()).expect("sigma validated");
    let samples: Vec<(f64, f64)> = (0..n_samples)
        .map(|_| {
            let d = normal.sample(&mut rng);
            (omega.hypot(d), emission_rate_for(gamma, gp, omega, d).powi(2))
        })
        .collect();
    let total_weight: f64 = samples.iter().map(|s| s.1).sum();

    let (g2, std_error): (Vec<f64>, Vec<f64>) = tau_grid
        .par_iter()
        .map(|&tau| {
            let values: Vec<f64> = samples.iter().map(|&(w_eff, _)| g2_for(gamma, gp, w_eff, tau).value).collect();
            let ratio = samples.iter().zip(&values).map(|(s, g)| s.1 * g).sum::<f64>() / total_weight;
            let spread: f64 = samples
                .iter()
                .zip(&values)
                .map(|(s, g)| (s.1 * (g - ratio)).powi(2))
                .sum();
            let n = n_samples as f64;
            let se = (spread * n / (n - 1.0)).sqrt() / total_weight;
            (ratio, se)
        })
        .unzip();

    Ok(QuasiStaticEstimate {
        tau_grid: tau_grid.to_vec(),
        g2,
        std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{g2_diffused_curve, QuadratureSpec};
    use crate::dynamics::g2_resonant;

    fn params() -> EmitterParams {
        EmitterParams::new(1.0, 0.3, 4.0, 0.0).unwrap()
    }

    #[test]
    fn no_spread_is_exact() {
        let p = params();
        let taus = [0.0, 0.5, 2.0];
        let est = quasi_static_average(&p, &DetuningDistribution::resonant(), &taus, 100, 1).unwrap();
        for (i, &t) in taus.iter().enumerate() {
            assert_eq!(est.g2[i], g2_resonant(&p, t));
            assert_eq!(est.std_error[i], 0.0);
        }
    }

    #[test]
    fn agrees_with_quadrature() {
        let p = params();
        let dist = DetuningDistribution::new(1.5, 0.0).unwrap();
        let taus: Vec<f64> = (1..40).map(|i| i as f64 * 0.1).collect();
        let est = quasi_static_average(&p, &dist, &taus, 100_000, 9).unwrap();
        let quad = g2_diffused_curve(&p, &dist, &taus, &QuadratureSpec::adaptive()).unwrap();
        for i in 0..taus.len() {
            let z = (est.g2[i] - quad[i]) / est.std_error[i];
            assert!(z.abs() < 3.0, "tau {}: z = {z}", taus[i]);
        }
    }

    #[test]
    fn error_shrinks_as_root_n() {
        let p = params();
        let dist = DetuningDistribution::new(2.0, 0.0).unwrap();
        let taus = [0.4, 0.8, 1.3];
        let a = quasi_static_average(&p, &dist, &taus, 20_000, 4).unwrap();
        let b = quasi_static_average(&p, &dist, &taus, 40_000, 5).unwrap();
        for i in 0..taus.len() {
            let r = a.std_error[i] / b.std_error[i];
            assert!((r / std::f64::consts::SQRT_2 - 1.0).abs() < 0.2, "ratio {r}");
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let dist = DetuningDistribution::new(1.0, 0.0).unwrap();
        assert!(quasi_static_average(&params(), &dist, &[1.0], 99, 0).is_err());
    }

    #[test]
    fn seeded() {
        let dist = DetuningDistribution::new(1.0, 0.0).unwrap();
        let a = quasi_static_average(&params(), &dist, &[0.7], 500, 3).unwrap();
        let b = quasi_static_average(&params(), &dist, &[0.7], 500, 3).unwrap();
        assert_eq!(a, b);
    }
}
