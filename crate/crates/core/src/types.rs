//! Shared physical quantities and dataset containers.
//!
//! Every rate and frequency held by these types is an angular frequency in
//! rad/s. Conversion to and from ordinary frequency (Hz) happens only at the
//! I/O boundary via [`convert_frequency`].

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fluorescence linewidth of the reference emitter, ordinary frequency.
pub const DEFAULT_FTL_LINEWIDTH_HZ: f64 = 109e6;

pub struct PhysicalConstants;

impl PhysicalConstants {
    /// Boltzmann constant, J/K (exact SI value).
    pub const K_B: f64 = 1.380_649e-23;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyDirection {
    ToAngular,
    ToOrdinary,
}

pub fn convert_frequency(value: f64, direction: FrequencyDirection) -> f64 {
    match direction {
        FrequencyDirection::ToAngular => value * TAU,
        FrequencyDirection::ToOrdinary => value / TAU,
    }
}

pub fn hz_to_angular(hz: f64) -> f64 {
    convert_frequency(hz, FrequencyDirection::ToAngular)
}

pub fn angular_to_hz(rad_per_s: f64) -> f64 {
    convert_frequency(rad_per_s, FrequencyDirection::ToOrdinary)
}

/// State of the driven two-level emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterParams {
    gamma: f64,
    gamma_c: f64,
    omega: f64,
    delta: f64,
}

impl EmitterParams {
    /// `gamma`: fluorescence decay rate, `gamma_c`: pure dephasing rate,
    /// `omega`: Rabi frequency, `delta`: laser detuning. All in rad/s.
    pub fn new(gamma: f64, gamma_c: f64, omega: f64, delta: f64) -> Result<Self> {
        let p = EmitterParams {
            gamma,
            gamma_c,
            omega,
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    /// Decay rate taken from a Fourier-limited linewidth given in Hz.
    pub fn from_ftl_linewidth_hz(ftl_hz: f64, gamma_c: f64, omega: f64, delta: f64) -> Result<Self> {
        Self::new(hz_to_angular(ftl_hz), gamma_c, omega, delta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.gamma_c.is_finite() && self.gamma_c >= 0.0) {
            return Err(Error::invalid(format!("gamma_c must be >= 0, got {}", self.gamma_c)));
        }
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(Error::invalid(format!("omega must be >= 0, got {}", self.omega)));
        }
        if !self.delta.is_finite() {
            return Err(Error::invalid("delta must be finite"));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_c(&self) -> f64 {
        self.gamma_c
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn gamma_perp(&self) -> f64 {
        gamma_perp(self)
    }

    /// Generalised Rabi frequency `sqrt(omega^2 + delta^2)`.
    pub fn effective_omega(&self) -> f64 {
        self.omega.hypot(self.delta)
    }

    pub fn with_omega(self, omega: f64) -> Result<Self> {
        Self::new(self.gamma, self.gamma_c, omega, self.delta)
    }

    pub fn with_delta(self, delta: f64) -> Result<Self> {
        Self::new(self.gamma, self.gamma_c, self.omega, delta)
    }

    pub fn with_gamma_c(self, gamma_c: f64) -> Result<Self> {
        Self::new(self.gamma, gamma_c, self.omega, self.delta)
    }

    // Detuning updates inside sampling loops, where finiteness is already known.
    pub(crate) fn detuned(self, delta: f64) -> Self {
        EmitterParams { delta, ..self }
    }
}

/// Transverse dephasing rate `gamma / 2 + gamma_c`.
pub fn gamma_perp(params: &EmitterParams) -> f64 {
    0.5 * params.gamma + params.gamma_c
}

/// Quasi-static Gaussian law of the emitter detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningDistribution {
    sigma: f64,
    mean: f64,
}

impl DetuningDistribution {
    pub fn new(sigma: f64, mean: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!("detuning sigma must be >= 0, got {sigma}")));
        }
        if !mean.is_finite() {
            return Err(Error::invalid("detuning mean must be finite"));
        }
        Ok(DetuningDistribution { sigma, mean })
    }

    /// No spectral diffusion.
    pub fn resonant() -> Self {
        DetuningDistribution {
            sigma: 0.0,
            mean: 0.0,
        }
    }

    /// From the full width at half maximum of an inhomogeneous line (rad/s).
    pub fn from_fwhm(fwhm: f64) -> Result<Self> {
        Self::new(fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt()), 0.0)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn fwhm(&self) -> f64 {
        self.sigma * 2.0 * (2.0 * std::f64::consts::LN_2).sqrt()
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma == 0.0
    }

    /// Probability density at `delta`. Undefined (infinite) for `sigma == 0`.
    pub fn density(&self, delta: f64) -> f64 {
        let z = (delta - self.mean) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * TAU.sqrt())
    }
}

/// A tau-binned second-order correlation histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    tau_bins: Vec<f64>,
    counts: Vec<f64>,
    bin_width: f64,
    normalization: f64,
}

/// Relative tolerance on bin spacing.
pub const BIN_UNIFORMITY_RTOL: f64 = 1e-6;

impl CorrelationCurve {
    /// Builds a curve whose normalisation maps the large-|tau| plateau to 1.
    pub fn new(tau_bins: Vec<f64>, counts: Vec<f64>, bin_width: f64) -> Result<Self> {
        Self::validate(&tau_bins, &counts, bin_width)?;
        let normalization = plateau_normalization(&tau_bins, &counts)?;
        Ok(CorrelationCurve {
            tau_bins,
            counts,
            bin_width,
            normalization,
        })
    }

    pub fn with_normalization(
        tau_bins: Vec<f64>,
        counts: Vec<f64>,
        bin_width: f64,
        normalization: f64,
    ) -> Result<Self> {
        Self::validate(&tau_bins, &counts, bin_width)?;
        if !(normalization.is_finite() && normalization > 0.0) {
            return Err(Error::invalid("normalization must be positive"));
        }
        Ok(CorrelationCurve {
            tau_bins,
            counts,
            bin_width,
            normalization,
        })
    }

    fn validate(tau_bins: &[f64], counts: &[f64], bin_width: f64) -> Result<()> {
        if tau_bins.len() != counts.len() {
            return Err(Error::invalid("tau_bins and counts differ in length"));
        }
        if tau_bins.len() < 2 {
            return Err(Error::invalid("a correlation curve needs at least two bins"));
        }
        if !(bin_width.is_finite() && bin_width > 0.0) {
            return Err(Error::invalid("bin width must be positive"));
        }
        if let Some(i) = first_nonuniform_bin(tau_bins, bin_width) {
            return Err(Error::invalid(format!(
                "bin {i} at tau = {:e} s breaks the uniform spacing of {bin_width:e} s",
                tau_bins[i]
            )));
        }
        if let Some(i) = counts.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::invalid(format!("bin {i} has invalid count {}", counts[i])));
        }
        Ok(())
    }

    pub fn tau_bins(&self) -> &[f64] {
        &self.tau_bins
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn len(&self) -> usize {
        self.tau_bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_bins.is_empty()
    }

    /// Counts mapped to g2 units.
    pub fn g2(&self) -> Vec<f64> {
        self.counts.iter().map(|c| c * self.normalization).collect()
    }
}

/// Index of the first bin whose distance to its predecessor deviates from
/// `bin_width` by more than [`BIN_UNIFORMITY_RTOL`].
pub fn first_nonuniform_bin(tau_bins: &[f64], bin_width: f64) -> Option<usize> {
    tau_bins
        .windows(2)
        .position(|w| ((w[1] - w[0]) - bin_width).abs() > BIN_UNIFORMITY_RTOL * bin_width)
        .map(|i| i + 1)
}

/// Reciprocal mean count over the outer 20 % of the |tau| range.
pub fn plateau_normalization(tau_bins: &[f64], counts: &[f64]) -> Result<f64> {
    let reach = tau_bins.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
    let cut = 0.8 * reach;
    let (sum, n) = tau_bins
        .iter()
        .zip(counts)
        .filter(|(t, _)| t.abs() >= cut)
        .fold((0.0, 0usize), |(s, n), (_, c)| (s + c, n + 1));
    if n == 0 || sum <= 0.0 {
        return Err(Error::invalid("correlation plateau holds no counts"));
    }
    Ok(n as f64 / sum)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    /// One standard deviation.
    pub sigma: f64,
    pub fixed: bool,
}

/// A value with its one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub x: f64,
    pub y: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Outcome of a least-squares fit.
///
/// `covariance` is indexed like `params`; rows and columns of fixed
/// parameters are zero. Bands are evaluated at the fitted abscissae and span
/// `sigma_level` standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<FitParam>,
    pub covariance: Vec<Vec<f64>>,
    pub residual_norm: f64,
    pub dof: usize,
    pub sigma_level: f64,
    pub confidence_bands: Vec<BandPoint>,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn estimate(&self, name: &str) -> Option<Estimate> {
        self.param(name).map(|p| Estimate {
            value: p.value,
            sigma: p.sigma,
        })
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.param(name).map(|p| p.value)
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.param(name).map(|p| p.sigma)
    }

    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }

    pub fn reduced_chi2(&self) -> f64 {
        self.residual_norm / self.dof as f64
    }

    pub(crate) fn require(&self, name: &str) -> Result<Estimate> {
        self.estimate(name)
            .ok_or_else(|| Error::invalid(format!("fit result has no parameter `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gamma_perp_examples() {
        let gamma = hz_to_angular(109e6);
        let p = EmitterParams::new(gamma, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(p.gamma_perp(), std::f64::consts::PI * 109e6);

        let p = EmitterParams::new(1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(gamma_perp(&p), 1.5);

        // 5 K: constant dephasing 0.22 GHz on top of the 109 MHz decay.
        let p = EmitterParams::new(gamma, hz_to_angular(0.22e9), 0.0, 0.0).unwrap();
        let expected_hz = 109e6 / 2.0 + 0.22e9;
        assert!((angular_to_hz(p.gamma_perp()) - expected_hz).abs() < 1e-6);
    }

    #[test]
    fn conversion_examples() {
        assert_eq!(hz_to_angular(109e6), TAU * 1.09e8);
        assert_eq!(hz_to_angular(0.0), 0.0);
        assert_eq!(angular_to_hz(0.0), 0.0);
    }

    #[test]
    fn params_reject_unphysical() {
        assert!(EmitterParams::new(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(EmitterParams::new(1.0, -1e-3, 1.0, 0.0).is_err());
        assert!(EmitterParams::new(1.0, 0.0, -1.0, 0.0).is_err());
        assert!(EmitterParams::new(1.0, 0.0, 1.0, f64::NAN).is_err());
        assert!(DetuningDistribution::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn detuning_density_integrates_to_one() {
        let d = DetuningDistribution::new(3.0, 1.0).unwrap();
        let h = 1e-3;
        let total: f64 = (-40_000..=40_000).map(|i| d.density(1.0 + i as f64 * h) * h).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let f = DetuningDistribution::from_fwhm(2.0).unwrap();
        assert!((f.fwhm() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn curve_rejects_nonuniform_and_negative() {
        let t = vec![0.0, 1.0, 2.0, 3.5];
        let err = CorrelationCurve::new(t, vec![1.0; 4], 1.0).unwrap_err();
        assert!(err.to_string().contains("bin 3"));
        let t = vec![0.0, 1.0, 2.0];
        assert!(CorrelationCurve::new(t, vec![1.0, -1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn curve_plateau_maps_to_one() {
        let tau: Vec<f64> = (-10..=10).map(f64::from).collect();
        let counts: Vec<f64> = tau.iter().map(|t: &f64| if t.abs() < 3.0 { 10.0 } else { 40.0 }).collect();
        let c = CorrelationCurve::new(tau, counts, 1.0).unwrap();
        assert_eq!(c.normalization(), 1.0 / 40.0);
        assert_eq!(c.g2()[0], 1.0);
    }

    proptest! {
        #[test]
        fn conversion_round_trip(x in -1e15f64..1e15) {
            let back = angular_to_hz(hz_to_angular(x));
            let ulp = f64::EPSILON * x.abs().max(f64::MIN_POSITIVE);
            prop_assert!((back - x).abs() <= ulp);
        }

        #[test]
        fn gamma_perp_monotone_in_dephasing(gamma in 1e-3f64..1e10, a in 0.0f64..1e10, b in 0.0f64..1e10) {
            let lo = EmitterParams::new(gamma, a.min(b), 0.0, 0.0).unwrap();
            let hi = EmitterParams::new(gamma, a.max(b), 0.0, 0.0).unwrap();
            prop_assert!(hi.gamma_perp() >= lo.gamma_perp());
            prop_assert!(lo.gamma_perp() >= gamma / 2.0);
            let floor = EmitterParams::new(gamma, 0.0, 0.0, 0.0).unwrap();
            prop_assert_eq!(floor.gamma_perp(), gamma / 2.0);
        }
    }
}
