//! Nonlinear least squares over a registry of named models.

mod g2fit;
mod lineshape;
mod lm;
mod registry;

pub use g2fit::{estimate_g2_guess, fit_g2, G2Fixed, G2FitReport, G2Guess, GAMMA_C_FLOOR_RTOL};
pub use lineshape::{fit_scan, histogram_line_fit, LineFitReport, LineShape, PleScan, ScanFit};
pub use lm::{confidence_bands, fit, fit_with, weighted_line_fit, FitOptions, FitProblem};
pub use registry::{
    model_by_name, Boltzmann, Cubic, G2Diffused, G2Resonant, Gaussian, Line, Logistic, Lorentzian, ModelKind,
    Saturation,
};

use crate::error::Result;

/// A parametric curve `y = f(x; p)`.
pub trait Model: Send + Sync {
    fn name(&self) -> &'static str;

    fn param_names(&self) -> &'static [&'static str];

    fn eval(&self, xs: &[f64], p: &[f64]) -> Result<Vec<f64>>;

    /// Analytic `df/dp`, one row per point. `None` selects central differences.
    fn jacobian(&self, _xs: &[f64], _p: &[f64]) -> Option<Result<Vec<Vec<f64>>>> {
        None
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY); self.param_names().len()]
    }

    /// Magnitude on which parameter `j` varies, used for difference steps.
    fn typical_scale(&self, j: usize, p: &[f64]) -> f64 {
        if p[j] != 0.0 {
            p[j].abs()
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests;
