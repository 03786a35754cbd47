use serde::{Deserialize, Serialize};

use super::lm::{fit_with, FitOptions, FitProblem};
use super::registry::ModelKind;
use crate::dynamics::{lambda_pair, DampingRegime};
use crate::error::{Error, Result};
use crate::types::{CorrelationCurve, DetuningDistribution, EmitterParams, Estimate, FitResult};

/// Quantities held fixed in a g2 fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Fixed {
    /// Decay rate, rad/s.
    pub gamma: f64,
    pub dist: DetuningDistribution,
}

/// Starting point for the free rates, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Guess {
    pub omega: f64,
    pub gamma_c: f64,
}

/// `gamma_c` below this fraction of `gamma` counts as pinned at `gamma_perp = gamma / 2`.
pub const GAMMA_C_FLOOR_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2FitReport {
    /// Parameters `scale`, `omega`, `gamma_c`.
    pub fit: FitResult,
    pub model: ModelKind,
    pub omega: Estimate,
    pub gamma_c: Estimate,
    /// `gamma / 2 + gamma_c`.
    pub gamma_perp: Estimate,
    /// Regime of the fitted resonant dynamics.
    pub regime: DampingRegime,
    pub pinned_at_floor: bool,
    pub guess: G2Guess,
}

/// Fits `scale * g2(tau)` to raw coincidence counts with Poisson weights.
///
/// The model is the resonant form when `fixed.dist` is degenerate and the
/// diffusion average otherwise. The free scale absorbs the pair rate, so the
/// model plateau stays at 1.
pub fn fit_g2(curve: &CorrelationCurve, fixed: &G2Fixed, guess: &G2Guess) -> Result<G2FitReport> {
    EmitterParams::new(fixed.gamma, guess.gamma_c, guess.omega, 0.0)?;
    let model = if fixed.dist.is_degenerate() && fixed.dist.mean() == 0.0 {
        ModelKind::G2Resonant
    } else {
        ModelKind::G2Diffused
    };
    let sigma: Vec<f64> = curve.counts().iter().map(|c| c.max(1.0).sqrt()).collect();
    let problem = FitProblem::new(
        model.build(fixed.gamma, fixed.dist),
        curve.tau_bins().to_vec(),
        curve.counts().to_vec(),
        vec![1.0 / curve.normalization(), guess.omega, guess.gamma_c],
    )
    .with_sigma(sigma);
    let fit = fit_with(&problem, &FitOptions::default())?;
    let omega = fit.require("omega")?;
    let gamma_c = fit.require("gamma_c")?;
    let params = EmitterParams::new(fixed.gamma, gamma_c.value, omega.value, 0.0)?;
    Ok(G2FitReport {
        model,
        omega,
        gamma_c,
        gamma_perp: Estimate {
            value: params.gamma_perp(),
            sigma: gamma_c.sigma,
        },
        regime: lambda_pair(&params).regime,
        pinned_at_floor: gamma_c.value <= GAMMA_C_FLOOR_RTOL * fixed.gamma,
        guess: *guess,
        fit,
    })
}

/// Starting rates read off the curve: the first Rabi peak fixes the
/// oscillation frequency and its overshoot the damping; a curve without a
/// peak is treated as overdamped with the rise time setting the slow rate.
pub fn estimate_g2_guess(curve: &CorrelationCurve, gamma: f64) -> Result<G2Guess> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma must be > 0"));
    }
    let g2 = curve.g2();
    let pts: Vec<(f64, f64)> = curve
        .tau_bins()
        .iter()
        .zip(&g2)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, g)| (*t, *g))
        .collect();
    if pts.len() < 5 {
        return Err(Error::invalid("too few positive-delay bins to estimate a starting point"));
    }
    let smooth: Vec<f64> = (0..pts.len())
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(pts.len());
            pts[lo..hi].iter().map(|p| p.1).sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let half_gamma = 0.5 * gamma;

    let peak = (2..smooth.len() - 2).find(|&i| {
        smooth[i] > 1.05 && smooth[i] >= smooth[i - 1] && smooth[i] >= smooth[i + 1] && smooth[i] > smooth[i + 2]
    });
    if let Some(i) = peak {
        let (t_peak, height) = (pts[i].0, smooth[i]);
        let beta = std::f64::consts::PI / t_peak;
        // Overshoot e^{-a pi / beta} with a = (gamma + gamma_perp) / 2.
        let a = -(height - 1.0).ln() / t_peak;
        let gamma_perp = (2.0 * a - gamma).max(half_gamma);
        let h = 0.5 * (gamma_perp - gamma);
        return Ok(G2Guess {
            omega: (beta * beta + h * h).sqrt(),
            gamma_c: gamma_perp - half_gamma,
        });
    }

    let t_half = pts
        .iter()
        .zip(&smooth)
        .find(|(_, g)| **g >= 0.5)
        .map(|(p, _)| p.0)
        .ok_or_else(|| Error::invalid("curve never rises to half its plateau"))?;
    // Slow overdamped rate with gamma_perp = 4 omega, solved for omega.
    let target = std::f64::consts::LN_2 / t_half;
    let slow = |w: f64| {
        let gp = (4.0 * w).max(half_gamma);
        let a = 0.5 * (gamma + gp);
        let h = 0.5 * (gp - gamma);
        a - (h * h - w * w).max(0.0).sqrt()
    };
    let (mut lo, mut hi) = (1e-3 * gamma, 1e4 * gamma);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if slow(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let omega = (lo * hi).sqrt();
    let gamma_perp = (4.0 * omega).max(half_gamma);
    Ok(G2Guess {
        omega,
        gamma_c: gamma_perp - half_gamma,
    })
}
