//! Coherent-driving regime from a power series at one temperature.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fitting::weighted_line_fit;
use crate::types::{Estimate, FitResult};

/// Slope thresholds of `gamma_perp` against `omega`.
pub const PI_PULSE_SLOPE: f64 = 0.5;
pub const PI_HALF_PULSE_SLOPE: f64 = 1.0;
pub const CRITICAL_SLOPE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEntry {
    /// Incident power, W.
    pub power: f64,
    /// Fitted Rabi frequency, rad/s.
    pub omega: Estimate,
    /// Fitted transverse dephasing rate, rad/s.
    pub gamma_perp: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    /// K.
    pub temperature: f64,
    pub entries: Vec<PowerEntry>,
}

impl PowerSeries {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::invalid("temperature must be > 0 K"));
        }
        if self.entries.len() < 2 {
            return Err(Error::invalid("a power series needs at least two entries"));
        }
        if let Some(i) = self.entries.windows(2).position(|w| w[1].power <= w[0].power) {
            return Err(Error::invalid(format!("powers must increase strictly (entry {})", i + 1)));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if !(e.power.is_finite() && e.power >= 0.0) {
                return Err(Error::invalid(format!("entry {i}: power must be >= 0")));
            }
            for (name, v) in [("omega", e.omega), ("gamma_perp", e.gamma_perp)] {
                if !(v.value.is_finite() && v.sigma.is_finite() && v.sigma > 0.0) {
                    return Err(Error::invalid(format!("entry {i}: {name} needs a finite value and sigma > 0")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FullyCoherentPiCapable,
    CoherentPi2Only,
    IncoherentUnderdamped,
    Overdamped,
}

impl Regime {
    pub fn from_slope(m: f64) -> Regime {
        if m <= PI_PULSE_SLOPE {
            Regime::FullyCoherentPiCapable
        } else if m <= PI_HALF_PULSE_SLOPE {
            Regime::CoherentPi2Only
        } else if m <= CRITICAL_SLOPE {
            Regime::IncoherentUnderdamped
        } else {
            Regime::Overdamped
        }
    }

    /// Whether at least a pi/2 rotation is possible.
    pub fn is_coherent(self) -> bool {
        matches!(self, Regime::FullyCoherentPiCapable | Regime::CoherentPi2Only)
    }
}

/// Probability mass of each regime under a Gaussian slope posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities {
    pub fully_coherent_pi_capable: f64,
    pub coherent_pi2_only: f64,
    pub incoherent_underdamped: f64,
    pub overdamped: f64,
}

impl ClassProbabilities {
    pub fn for_slope(m: Estimate) -> ClassProbabilities {
        let cdf = |x: f64| {
            if m.sigma > 0.0 {
                Normal::new(m.value, m.sigma).expect("sigma > 0").cdf(x)
            } else if m.value <= x {
                1.0
            } else {
                0.0
            }
        };
        let (a, b, c) = (cdf(PI_PULSE_SLOPE), cdf(PI_HALF_PULSE_SLOPE), cdf(CRITICAL_SLOPE));
        ClassProbabilities {
            fully_coherent_pi_capable: a,
            coherent_pi2_only: b - a,
            incoherent_underdamped: c - b,
            overdamped: 1.0 - c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub temperature: f64,
    pub slope_m: Estimate,
    /// `gamma_perp` extrapolated to zero drive, rad/s.
    pub offset: Estimate,
    pub offset_consistent_with_gamma_over_2: bool,
    /// Decided by the central slope alone.
    pub regime: Regime,
    pub class_probabilities: ClassProbabilities,
    /// rad/s per sqrt(W).
    pub rabi_vs_sqrtp_slope: Estimate,
    pub rabi_vs_sqrtp_intercept: Estimate,
    /// Level used for the consistency flag.
    pub sigma_level: f64,
}

const SIGMA_LEVEL: f64 = 2.0;

/// Weighted line `omega = k sqrt(P) + c`.
pub fn fit_rabi_vs_power(series: &PowerSeries) -> Result<FitResult> {
    series.validate()?;
    let x: Vec<f64> = series.entries.iter().map(|e| e.power.sqrt()).collect();
    let y: Vec<f64> = series.entries.iter().map(|e| e.omega.value).collect();
    let s: Vec<f64> = series.entries.iter().map(|e| e.omega.sigma).collect();
    weighted_line_fit(&x, &y, Some(&s), SIGMA_LEVEL)
}

/// Fits `gamma_perp = offset + m * omega` and classifies `m`. Uncertainty in
/// `omega` is not propagated into the slope.
pub fn classify(series: &PowerSeries, gamma: f64) -> Result<RegimeReport> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma must be > 0"));
    }
    let rabi = fit_rabi_vs_power(series)?;
    let x: Vec<f64> = series.entries.iter().map(|e| e.omega.value).collect();
    let y: Vec<f64> = series.entries.iter().map(|e| e.gamma_perp.value).collect();
    let s: Vec<f64> = series.entries.iter().map(|e| e.gamma_perp.sigma).collect();
    let line = weighted_line_fit(&x, &y, Some(&s), SIGMA_LEVEL)?;
    let slope_m = line.require("slope")?;
    let offset = line.require("intercept")?;
    let floor = 0.5 * gamma;
    // A few ulps of slack so an exact fixture is not lost to rounding.
    let slack = 8.0 * f64::EPSILON * offset.value.abs().max(floor);
    Ok(RegimeReport {
        temperature: series.temperature,
        slope_m,
        offset,
        offset_consistent_with_gamma_over_2: (offset.value - floor).abs() <= SIGMA_LEVEL * offset.sigma + slack,
        regime: Regime::from_slope(slope_m.value),
        class_probabilities: ClassProbabilities::for_slope(slope_m),
        rabi_vs_sqrtp_slope: rabi.require("slope")?,
        rabi_vs_sqrtp_intercept: rabi.require("intercept")?,
        sigma_level: SIGMA_LEVEL,
    })
}

/// Adjacent measured temperatures between which coherent driving is lost:
/// the last coherent report followed by an incoherent one. No interpolation.
pub fn coherence_bracket(reports: &[RegimeReport]) -> Option<(f64, f64)> {
    let mut sorted: Vec<&RegimeReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));
    sorted
        .windows(2)
        .rev()
        .find(|w| w[0].regime.is_coherent() && !w[1].regime.is_coherent())
        .map(|w| (w[0].temperature, w[1].temperature))
}
