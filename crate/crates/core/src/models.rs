//! Temperature and power laws of the emitter line, and the gap-closing estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FitResult, PhysicalConstants};

/// `w(T) = A + B exp(-C / (k_B T))`, with `C` an energy in joules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl BoltzmannModel {
    pub fn eval(&self, t: f64) -> Result<f64> {
        check_temperature(t)?;
        Ok(self.a + self.b * boltzmann_factor(self.c, t))
    }

    /// Partial derivatives with respect to `(A, B, C)`.
    pub fn gradient(&self, t: f64) -> Result<[f64; 3]> {
        check_temperature(t)?;
        let e = boltzmann_factor(self.c, t);
        Ok([1.0, e, -self.b * e / (PhysicalConstants::K_B * t)])
    }
}

fn boltzmann_factor(c: f64, t: f64) -> f64 {
    (-c / (PhysicalConstants::K_B * t)).exp()
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(format!("temperature must be > 0 K, got {t}")));
    }
    Ok(())
}

/// `A + B T^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicLinewidthModel {
    pub a: f64,
    pub b: f64,
}

impl CubicLinewidthModel {
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::invalid(format!("temperature must be >= 0 K, got {t}")));
        }
        Ok(self.a + self.b * t * t * t)
    }
}

/// `D + (A - D) / [1 + exp(B (ln T - C))]^E`, natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticLinewidthModel {
    pub a: f64,
    pub d: f64,
    pub b: f64,
    pub c: f64,
    pub e: f64,
}

impl LogisticLinewidthModel {
    pub fn eval(&self, t: f64) -> Result<f64> {
        check_temperature(t)?;
        let z = self.b * (t.ln() - self.c);
        // ln(1 + e^z)^E without overflow for large z.
        let log_base = if z > 30.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        Ok(self.d + (self.a - self.d) * (-self.e * log_base).exp())
    }
}

/// `I(P) = I_inf (P / P_sat) / (1 + P / P_sat)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationModel {
    pub i_inf: f64,
    pub p_sat: f64,
}

impl SaturationModel {
    pub fn eval(&self, p: f64) -> Result<f64> {
        if !(p >= 0.0) {
            return Err(Error::invalid(format!("power must be >= 0, got {p}")));
        }
        if p.is_infinite() {
            return Ok(self.i_inf);
        }
        let s = p / self.p_sat;
        Ok(self.i_inf * s / (1.0 + s))
    }
}

/// Lower bound on the spectral diffusion rate from the laser scan speed and
/// the single-scan broadening: `(u_L / dv_ftl) * (dv_single / dv_ftl)`.
pub fn diffusion_rate(u_l: f64, dv_ftl: f64, dv_single: f64) -> Result<f64> {
    for (name, v) in [("scan speed", u_l), ("FTL linewidth", dv_ftl), ("single-scan linewidth", dv_single)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
        }
    }
    Ok((u_l / dv_ftl) * (dv_single / dv_ftl))
}

pub const GAP_GRID_START_K: f64 = 4.0;
pub const GAP_GRID_END_K: f64 = 300.0;
pub const GAP_GRID_STEP_K: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapClosing {
    /// First and last grid temperature at which the bands overlap.
    pub interval: Option<(f64, f64)>,
    /// False when the overlap set has holes inside `interval`.
    pub contiguous: bool,
    pub sigma_level: f64,
    pub diagnostic: Option<String>,
}

/// Temperatures on the 1 K grid over [4, 300] K at which the `sigma_level`
/// bands of two Boltzmann fits (parameters `A`, `B`, `C`) overlap.
pub fn gap_closing_range(fit_down: &FitResult, fit_up: &FitResult, sigma_level: f64) -> Result<GapClosing> {
    if !(sigma_level.is_finite() && sigma_level > 0.0) {
        return Err(Error::invalid("sigma level must be > 0"));
    }
    let down = BoltzmannBand::from_fit(fit_down)?;
    let up = BoltzmannBand::from_fit(fit_up)?;
    let n = ((GAP_GRID_END_K - GAP_GRID_START_K) / GAP_GRID_STEP_K).round() as usize;
    let mut hits = Vec::new();
    for i in 0..=n {
        let t = GAP_GRID_START_K + i as f64 * GAP_GRID_STEP_K;
        let (lo1, hi1) = down.band(t, sigma_level)?;
        let (lo2, hi2) = up.band(t, sigma_level)?;
        if lo1.max(lo2) <= hi1.min(hi2) {
            hits.push(i);
        }
    }
    let to_t = |i: usize| GAP_GRID_START_K + i as f64 * GAP_GRID_STEP_K;
    Ok(match (hits.first(), hits.last()) {
        (Some(&a), Some(&b)) => GapClosing {
            interval: Some((to_t(a), to_t(b))),
            contiguous: b - a + 1 == hits.len(),
            sigma_level,
            diagnostic: None,
        },
        _ => GapClosing {
            interval: None,
            contiguous: true,
            sigma_level,
            diagnostic: Some(format!(
                "the {sigma_level}-sigma bands do not overlap anywhere in [{GAP_GRID_START_K}, {GAP_GRID_END_K}] K"
            )),
        },
    })
}

struct BoltzmannBand {
    model: BoltzmannModel,
    cov: [[f64; 3]; 3],
}

impl BoltzmannBand {
    fn from_fit(fit: &FitResult) -> Result<Self> {
        let idx: Vec<usize> = ["A", "B", "C"]
            .iter()
            .map(|n| {
                fit.index(n)
                    .ok_or_else(|| Error::invalid(format!("Boltzmann fit lacks parameter `{n}`")))
            })
            .collect::<Result<_>>()?;
        let mut cov = [[0.0; 3]; 3];
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                cov[r][c] = fit
                    .covariance
                    .get(i)
                    .and_then(|row| row.get(j))
                    .copied()
                    .ok_or_else(|| Error::invalid("fit covariance does not match its parameters"))?;
            }
        }
        Ok(BoltzmannBand {
            model: BoltzmannModel {
                a: fit.params[idx[0]].value,
                b: fit.params[idx[1]].value,
                c: fit.params[idx[2]].value,
            },
            cov,
        })
    }

    fn band(&self, t: f64, k: f64) -> Result<(f64, f64)> {
        let y = self.model.eval(t)?;
        let g = self.model.gradient(t)?;
        let var: f64 = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| g[i] * self.cov[i][j] * g[j])
            .sum();
        let half = k * var.max(0.0).sqrt();
        Ok((y - half, y + half))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::FitParam;
    use proptest::prelude::*;

    const KB: f64 = PhysicalConstants::K_B;

    pub(crate) fn boltzmann_fit(m: BoltzmannModel, sd: [f64; 3]) -> FitResult {
        let names = ["A", "B", "C"];
        let vals = [m.a, m.b, m.c];
        FitResult {
            params: (0..3)
                .map(|i| FitParam {
                    name: names[i].into(),
                    value: vals[i],
                    sigma: sd[i],
                    fixed: false,
                })
                .collect(),
            covariance: (0..3)
                .map(|i| (0..3).map(|j| if i == j { sd[i] * sd[i] } else { 0.0 }).collect())
                .collect(),
            residual_norm: 0.0,
            dof: 1,
            sigma_level: 2.0,
            confidence_bands: vec![],
            converged: true,
            iterations: 0,
        }
    }

    #[test]
    fn boltzmann_limits() {
        let m = BoltzmannModel { a: 2.42, b: -1.5, c: 300.0 * KB };
        assert!((m.eval(1e12).unwrap() - (m.a + m.b)).abs() < 1e-9 * (m.a + m.b).abs());
        assert!((m.eval(1.0).unwrap() - m.a).abs() < 1e-9 * m.a);
        assert!(m.eval(0.0).is_err());
        assert!(m.eval(-3.0).is_err());
    }

    #[test]
    fn boltzmann_gradient_matches_differences() {
        let m = BoltzmannModel { a: 1.0, b: 2.0, c: 80.0 * KB };
        let g = m.gradient(120.0).unwrap();
        let h = 1e-6;
        let fd_c = (BoltzmannModel { c: m.c * (1.0 + h), ..m }.eval(120.0).unwrap()
            - BoltzmannModel { c: m.c * (1.0 - h), ..m }.eval(120.0).unwrap())
            / (2.0 * h * m.c);
        assert!((g[2] - fd_c).abs() < 1e-6 * fd_c.abs());
        assert_eq!(g[0], 1.0);
    }

    #[test]
    fn cubic_examples() {
        let m = CubicLinewidthModel { a: 1.01e9, b: 2e3 };
        assert_eq!(m.eval(0.0).unwrap(), m.a);
        let t = 17.0;
        let lhs = m.eval(2.0 * t).unwrap() - m.a;
        let rhs = 8.0 * (m.eval(t).unwrap() - m.a);
        assert!((lhs - rhs).abs() < 1e-12 * rhs);
    }

    #[test]
    fn logistic_asymptotes() {
        let m = LogisticLinewidthModel { a: 109e6, d: 5e9, b: 20.0, c: 3.4, e: 0.7 };
        assert!((m.eval(1e-6).unwrap() - m.a).abs() < 1e-9 * m.a);
        assert!((m.eval(1e6).unwrap() - m.d).abs() < 1e-9 * m.d);
        assert!(m.eval(0.0).is_err());
    }

    #[test]
    fn saturation_examples() {
        let m = SaturationModel { i_inf: 2e5, p_sat: 3e-6 };
        assert_eq!(m.eval(0.0).unwrap(), 0.0);
        assert!((m.eval(m.p_sat).unwrap() - m.i_inf / 2.0).abs() < 1e-9 * m.i_inf);
        assert_eq!(m.eval(f64::INFINITY).unwrap(), m.i_inf);
        assert!((m.eval(1e6).unwrap() - m.i_inf).abs() < 1e-9 * m.i_inf);
    }

    #[test]
    fn diffusion_rate_examples() {
        let r = diffusion_rate(890e6, 109e6, 112e6).unwrap();
        assert!((r - 8.389866172881070617).abs() < 1e-12);
        assert!(r > 8.5 - 1.9 && r < 8.5 + 1.9);
        assert_eq!(diffusion_rate(890e6, 109e6, 109e6).unwrap(), 890e6 / 109e6);
        let doubled = diffusion_rate(890e6, 109e6, 224e6).unwrap();
        assert!((doubled - 2.0 * r).abs() < 1e-12 * r);
        assert!(diffusion_rate(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn identical_fits_close_everywhere() {
        let f = boltzmann_fit(BoltzmannModel { a: 2.0, b: -1.0, c: 100.0 * KB }, [0.01, 0.01, 1.0 * KB]);
        let g = gap_closing_range(&f, &f, 2.0).unwrap();
        assert_eq!(g.interval, Some((GAP_GRID_START_K, GAP_GRID_END_K)));
        assert!(g.contiguous);
    }

    #[test]
    fn separated_fits_never_close() {
        let f = boltzmann_fit(BoltzmannModel { a: 2.0, b: 0.0, c: KB }, [0.01, 0.0, 0.0]);
        let g = boltzmann_fit(BoltzmannModel { a: 1.0, b: 0.0, c: KB }, [0.01, 0.0, 0.0]);
        let r = gap_closing_range(&f, &g, 2.0).unwrap();
        assert_eq!(r.interval, None);
        assert!(r.diagnostic.is_some());
    }

    #[test]
    fn missing_parameter_is_rejected() {
        let mut f = boltzmann_fit(BoltzmannModel { a: 2.0, b: 0.0, c: KB }, [0.01, 0.0, 0.0]);
        f.params[2].name = "E".into();
        assert!(gap_closing_range(&f, &f, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn logistic_is_increasing(
            t in 1.0..200.0f64,
            dt in 0.01..50.0f64,
            b in 0.1..30.0f64,
            c in 0.0..6.0f64,
            e in 0.1..3.0f64,
        ) {
            let m = LogisticLinewidthModel { a: 1.0, d: 10.0, b, c, e };
            prop_assert!(m.eval(t + dt).unwrap() >= m.eval(t).unwrap());
        }

        #[test]
        fn saturation_is_concave_and_bounded(p in 0.0..100.0f64, h in 1e-3..1.0f64) {
            let m = SaturationModel { i_inf: 5.0, p_sat: 2.0 };
            let (a, b, c) = (m.eval(p).unwrap(), m.eval(p + h).unwrap(), m.eval(p + 2.0 * h).unwrap());
            prop_assert!(b >= a && b < m.i_inf);
            prop_assert!(a + c <= 2.0 * b + 1e-12);
        }

        #[test]
        fn diffusion_rate_is_unit_free(
            ul in 1e6..1e10f64,
            ftl in 1e6..1e9f64,
            single in 1e6..1e9f64,
            scale in 1e-6..1e6f64,
        ) {
            let r = diffusion_rate(ul, ftl, single).unwrap();
            let s = diffusion_rate(ul * scale, ftl * scale, single * scale).unwrap();
            prop_assert!((r - s).abs() <= 1e-12 * r);
        }

        #[test]
        fn gap_closing_is_symmetric(
            a1 in 1.0..3.0f64, b1 in -2.0..0.0f64, c1 in 20.0..400.0f64,
            a2 in 0.0..1.0f64, b2 in 0.0..3.0f64, c2 in 20.0..400.0f64,
            s in 0.001..0.3f64,
        ) {
            let f = boltzmann_fit(BoltzmannModel { a: a1, b: b1, c: c1 * KB }, [s, s, 5.0 * KB]);
            let g = boltzmann_fit(BoltzmannModel { a: a2, b: b2, c: c2 * KB }, [s, 2.0 * s, 3.0 * KB]);
            prop_assert_eq!(gap_closing_range(&f, &g, 2.0).unwrap(), gap_closing_range(&g, &f, 2.0).unwrap());
        }
    }
}
