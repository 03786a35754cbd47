use serde::{Deserialize, Serialize};

use super::Model;
use crate::diffusion::{g2_diffused_curve, QuadratureSpec};
use crate::dynamics::g2_for;
use crate::error::{Error, Result};
use crate::models::{BoltzmannModel, CubicLinewidthModel, LogisticLinewidthModel, SaturationModel};
use crate::types::{DetuningDistribution, EmitterParams};

const UNBOUNDED: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);
const NON_NEGATIVE: (f64, f64) = (0.0, f64::INFINITY);
const POSITIVE: (f64, f64) = (f64::MIN_POSITIVE, f64::INFINITY);

/// Every model the fitting engine knows by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Line,
    Boltzmann,
    Cubic,
    Logistic,
    Saturation,
    Lorentzian,
    Gaussian,
    G2Resonant,
    G2Diffused,
}

impl ModelKind {
    pub const ALL: [ModelKind; 9] = [
        ModelKind::Line,
        ModelKind::Boltzmann,
        ModelKind::Cubic,
        ModelKind::Logistic,
        ModelKind::Saturation,
        ModelKind::Lorentzian,
        ModelKind::Gaussian,
        ModelKind::G2Resonant,
        ModelKind::G2Diffused,
    ];

    /// The model, with the emitter context the g2 models need. `gamma` is the
    /// fixed decay rate and `dist` the fixed detuning spread.
    pub fn build(self, gamma: f64, dist: DetuningDistribution) -> Box<dyn Model> {
        match self {
            ModelKind::Line => Box::new(Line),
            ModelKind::Boltzmann => Box::new(Boltzmann),
            ModelKind::Cubic => Box::new(Cubic),
            ModelKind::Logistic => Box::new(Logistic),
            ModelKind::Saturation => Box::new(Saturation),
            ModelKind::Lorentzian => Box::new(Lorentzian),
            ModelKind::Gaussian => Box::new(Gaussian),
            ModelKind::G2Resonant => Box::new(G2Resonant { gamma }),
            ModelKind::G2Diffused => Box::new(G2Diffused { gamma, dist }),
        }
    }
}

fn pointwise(xs: &[f64], f: impl Fn(f64) -> Result<f64>) -> Result<Vec<f64>> {
    xs.iter().map(|&x| f(x)).collect()
}

pub struct Line;

impl Model for Line {
    fn name(&self) -> &'static str {
        "line"
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["slope", "intercept"]
    }
    fn eval(&self, xs: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        Ok(xs.iter().map(|x| p[0] * x + p[1]).collect())
    }
    fn jacobian(&self, xs: &[f64], _p: &[f64]) -> Option<Result<Vec<Vec<f64>>>> {
        Some(Ok(xs.iter().map(|&x| vec![x, 1.0]).collect()))
    }
}

pub struct Boltzmann;

impl Model for Boltzmann {
    fn name(&self) -> &'static str {
        "boltzmann"
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["A", "B", "C"]
    }
    fn eval(&self, xs: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let m = BoltzmannModel { a: p[0], b: p[1], c: p[2] };
        pointwise(xs, |t| m.eval(t))
    }
    fn jacobian(&self, xs: &[f64], p: &[f64]) -> Option<Result<Vec<Vec<f64>>>> {
        let m = BoltzmannModel { a: p[0], b: p[1], c: p[2] };
        Some(xs.iter().map(|&t| m.gradient(t).map(|g| g.to_vec())).collect())
    }
}

pub struct Cubic;

impl Model for Cubic {
    fn name(&self) -> &'static str {
        "cubic"
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["A", "B"]
    }
    fn eval(&self, xs: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let m = CubicLinewidthModel { a: p[0], b: p[1] };
        pointwise(xs, |t| m.eval(t))
    }
    fn jacobian(&self, xs: &[f64], _p: &[f64]) -> Option<Result<Vec<Vec<f64>>>> {
        Some(Ok(xs.iter().map(|&t| vec![1.0, t * t * t]).collect()))
    }
}

pub struct Logistic;

impl Model for Logistic {
    fn name(&self) -> &'static str {
        "logistic"
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["A", "D", "B", "C", "E"]
    }
    fn eval(&self, xs: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let m = LogisticLinewidthModel { a: p[0], d: p[1], b: p[2], c: p[3], e: p[4] };
        pointwise(xs, |t| m.eval(t))
    }
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![UNBOUNDED, UNBOUNDED, POSITIVE, UNBOUNDED, POSITIVE]
    }
}

pub struct Saturation;

impl Model for Saturation {
    fn name(&self) -> &'static str {
        "saturation"
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["I_inf", "P_sat"]
    }
    fn eval(&self, xs: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let m = SaturationModel { i_inf: p[0], p_sat: p[1] };
        pointwise(xs, |x| m.eval(x))
    }
    fn jacobian(&self, xs: &[f64], p: &[f64]) -> Option<Result<Vec<Vec<f64>>>> {
        Some(Ok(xs
            .iter()
            .map(|&x| {
                let d = p[1] + x;
                vec![x / d, -p[0] * x / (d * d)]
            })
            .collect()))
    }
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![UNBOUNDED, POSITIVE]
    }
}

/// `offset + amplitude * (w/2)^2 / ((x - center)^2 + (w/2)^2)`, `w` the FWHM.
pub struct Lorentzian;

impl Model for Lorentzian {
    fn name(&self) -> &'static str {
        "lorentzian"
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["amplitude", "center", "fwhm", "offset"]
    }
    fn eval(&self, xs: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let hw2 = 0.25 * p[2] * p[2];
        Ok(xs.iter().map(|x| p[3] + p[0] * hw2 / ((x - p[1]).powi(2) + hw2)).collect())
    }
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![UNBOUNDED, UNBOUNDED, POSITIVE, UNBOUNDED]
    }
    fn typical_scale(&self, j: usize, p: &[f64]) -> f64 {
        // The centre moves on the scale of the width, not of its own value.
        if j == 1 { p[2].abs() } else { default_scale(p[j]) }
    }
}

/// `offset + amplitude * exp(-4 ln2 (x - center)^2 / w^2)`, `w` the FWHM.
pub struct Gaussian;

impl Model for Gaussian {
    fn name(&self) -> &'static str {
        "gaussian"
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["amplitude", "center", "fwhm", "offset"]
    }
    fn eval(&self, xs: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let k = 4.0 * std::f64::consts::LN_2 / (p[2] * p[2]);
        Ok(xs.iter().map(|x| p[3] + p[0] * (-k * (x - p[1]).powi(2)).exp()).collect())
    }
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![UNBOUNDED, UNBOUNDED, POSITIVE, UNBOUNDED]
    }
    fn typical_scale(&self, j: usize, p: &[f64]) -> f64 {
        if j == 1 { p[2].abs() } else { default_scale(p[j]) }
    }
}

fn default_scale(v: f64) -> f64 {
    if v != 0.0 { v.abs() } else { 1.0 }
}

/// `scale * g2(|tau|)` at fixed decay rate; parameters in rad/s.
pub struct G2Resonant {
    pub gamma: f64,
}

impl Model for G2Resonant {
    fn name(&self) -> &'static str {
        "g2_resonant"
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["scale", "omega", "gamma_c"]
    }
    fn eval(&self, xs: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let params = EmitterParams::new(self.gamma, p[2], p[1], 0.0)?;
        let gp = params.gamma_perp();
        Ok(xs.iter().map(|t| p[0] * g2_for(self.gamma, gp, p[1], t.abs()).value).collect())
    }
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![NON_NEGATIVE, NON_NEGATIVE, NON_NEGATIVE]
    }
    fn typical_scale(&self, j: usize, p: &[f64]) -> f64 {
        if j == 0 { default_scale(p[0]) } else { p[j].abs().max(1e-2 * self.gamma) }
    }
}

/// `scale * g2` averaged over a fixed Gaussian detuning spread.
pub struct G2Diffused {
    pub gamma: f64,
    pub dist: DetuningDistribution,
}

impl Model for G2Diffused {
    fn name(&self) -> &'static str {
        "g2_diffused"
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["scale", "omega", "gamma_c"]
    }
    fn eval(&self, xs: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let params = EmitterParams::new(self.gamma, p[2], p[1], 0.0)?;
        let quad = QuadratureSpec::auto_for(&params, &self.dist);
        let taus: Vec<f64> = xs.iter().map(|t| t.abs()).collect();
        let g = g2_diffused_curve(&params, &self.dist, &taus, &quad)?;
        Ok(g.into_iter().map(|v| p[0] * v).collect())
    }
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![NON_NEGATIVE, NON_NEGATIVE, NON_NEGATIVE]
    }
    fn typical_scale(&self, j: usize, p: &[f64]) -> f64 {
        if j == 0 { default_scale(p[0]) } else { p[j].abs().max(1e-2 * self.gamma) }
    }
}

/// Model kind by its registry name.
pub fn model_by_name(name: &str) -> Result<ModelKind> {
    ModelKind::ALL
        .into_iter()
        .find(|k| k.build(1.0, DetuningDistribution::resonant()).name() == name)
        .ok_or_else(|| Error::invalid(format!("unknown model `{name}`")))
}
