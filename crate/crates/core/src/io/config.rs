use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::QuadratureSpec;
use crate::dynamics::BlochOptions;
use crate::error::{Error, Result};
use crate::fitting::FitOptions;
use crate::types::{hz_to_angular, DEFAULT_FTL_LINEWIDTH_HZ};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "EMCOH_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureChoice {
    /// Gauss-Hermite where it resolves the line, adaptive otherwise.
    Auto,
    GaussHermite,
    Adaptive,
}

/// Flat key-value settings shared by every command.
///
/// ```toml
/// ftl_linewidth_hz = 109e6   # or: gamma_rad_s = 6.85e8
/// quadrature = "auto"        # auto | gauss_hermite | adaptive
/// quadrature_nodes = 64
/// quadrature_rel_tol = 1e-10
/// ode_rtol = 1e-9
/// ode_atol = 1e-12
/// fit_max_iterations = 500
/// fit_xtol = 1e-8
/// fit_ftol = 1e-10
/// sigma_level = 2.0
/// seed = 1
/// output_dir = "out"
/// svg = false
/// ```
///
/// Frequencies on the command line and in CSV files are ordinary (Hz);
/// internally every rate is angular.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub ftl_linewidth_hz: Option<f64>,
    pub gamma_rad_s: Option<f64>,
    pub quadrature: QuadratureChoice,
    pub quadrature_nodes: usize,
    pub quadrature_rel_tol: f64,
    pub ode_rtol: f64,
    pub ode_atol: f64,
    pub fit_max_iterations: usize,
    pub fit_xtol: f64,
    pub fit_ftol: f64,
    pub sigma_level: f64,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub svg: bool,
}

impl Default for Config {
    fn default() -> Self {
        let quad = QuadratureSpec::default();
        let ode = BlochOptions::default();
        let fit = FitOptions::default();
        Config {
            ftl_linewidth_hz: None,
            gamma_rad_s: None,
            quadrature: QuadratureChoice::Auto,
            quadrature_nodes: quad.node_count,
            quadrature_rel_tol: quad.rel_tol,
            ode_rtol: ode.rtol,
            ode_atol: ode.atol,
            fit_max_iterations: fit.max_iterations,
            fit_xtol: fit.xtol,
            fit_ftol: fit.ftol,
            sigma_level: fit.sigma_level,
            seed: None,
            output_dir: PathBuf::from("out"),
            svg: false,
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` when given, then applies the output-directory override.
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?;
                Config::from_toml_str(&text)?
            }
            None => Config::default(),
        };
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.output_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ftl_linewidth_hz.is_some() && self.gamma_rad_s.is_some() {
            return Err(Error::invalid("config: set ftl_linewidth_hz or gamma_rad_s, not both"));
        }
        let positive = [
            ("ftl_linewidth_hz", self.ftl_linewidth_hz.unwrap_or(1.0)),
            ("gamma_rad_s", self.gamma_rad_s.unwrap_or(1.0)),
            ("quadrature_rel_tol", self.quadrature_rel_tol),
            ("ode_rtol", self.ode_rtol),
            ("ode_atol", self.ode_atol),
            ("fit_xtol", self.fit_xtol),
            ("fit_ftol", self.fit_ftol),
            ("sigma_level", self.sigma_level),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("config: {name} must be > 0")));
            }
        }
        if self.quadrature_nodes < 2 || self.fit_max_iterations == 0 {
            return Err(Error::invalid("config: quadrature_nodes >= 2 and fit_max_iterations >= 1 required"));
        }
        Ok(())
    }

    /// Decay rate in rad/s.
    pub fn gamma(&self) -> f64 {
        match (self.gamma_rad_s, self.ftl_linewidth_hz) {
            (Some(g), _) => g,
            (None, Some(hz)) => hz_to_angular(hz),
            (None, None) => hz_to_angular(DEFAULT_FTL_LINEWIDTH_HZ),
        }
    }

    /// Quadrature rule; `None` means choose per parameter set.
    pub fn quadrature_spec(&self) -> Option<QuadratureSpec> {
        match self.quadrature {
            QuadratureChoice::Auto => None,
            QuadratureChoice::GaussHermite => Some(QuadratureSpec::gauss_hermite(self.quadrature_nodes)),
            QuadratureChoice::Adaptive => Some(QuadratureSpec {
                rel_tol: self.quadrature_rel_tol,
                ..QuadratureSpec::adaptive()
            }),
        }
    }

    pub fn bloch_options(&self) -> BlochOptions {
        BlochOptions {
            rtol: self.ode_rtol,
            atol: self.ode_atol,
            ..BlochOptions::default()
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_iterations: self.fit_max_iterations,
            xtol: self.fit_xtol,
            ftol: self.fit_ftol,
            sigma_level: self.sigma_level,
        }
    }

    /// Seed for a stochastic command: the flag wins over the config.
    pub fn require_seed(&self, flag: Option<u64>) -> Result<u64> {
        flag.or(self.seed)
            .ok_or_else(|| Error::invalid("this command is stochastic; pass --seed or set `seed` in the config"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::QuadratureScheme;

    #[test]
    fn defaults_and_overrides() {
        let c = Config::from_toml_str("").unwrap();
        assert_eq!(c, Config::default());
        assert!((c.gamma() - hz_to_angular(109e6)).abs() < 1e-6);
        let c = Config::from_toml_str("ftl_linewidth_hz = 100e6\nseed = 7\nquadrature = \"adaptive\"").unwrap();
        assert!((c.gamma() - hz_to_angular(100e6)).abs() < 1e-6);
        assert_eq!(c.require_seed(None).unwrap(), 7);
        assert_eq!(c.require_seed(Some(3)).unwrap(), 3);
        assert_eq!(c.quadrature_spec().unwrap().scheme, QuadratureScheme::AdaptiveTrapezoid);
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(Config::from_toml_str("ode_rtol = 0").is_err());
        assert!(Config::from_toml_str("frobnicate = 1").is_err());
        assert!(Config::from_toml_str("ftl_linewidth_hz = 1e8\ngamma_rad_s = 1e9").is_err());
        assert!(Config::default().require_seed(None).is_err());
    }
}
