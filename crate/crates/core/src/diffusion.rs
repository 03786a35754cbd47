//! Correlation function averaged over a quasi-static Gaussian detuning law.
//!
//! Every detuning contributes coincidences at a rate proportional to the
//! square of its emission rate, so
//!
//! ```text
//! g2(tau) = ∫ p(Δ) C(Δ)^2 g2(tau, Δ) dΔ / ∫ p(Δ) C(Δ)^2 dΔ
//! ```
//!
//! Valid while the detuning is frozen over the correlation window.

use std::cell::RefCell;
use std::f64::consts::{E, PI};
use std::collections::HashMap;
use std::rc::Rc;

use gauss_quad::GaussHermite;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{emission_rate_for, first_peak_and_dip, g2_for};
use crate::error::{Error, Result};
use crate::types::{DetuningDistribution, EmitterParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureScheme {
    GaussHermite,
    AdaptiveTrapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss-Hermite order, or initial panels per segment for the adaptive rule.
    pub node_count: usize,
    pub scheme: QuadratureScheme,
    /// Half-width of the adaptive integration range in units of sigma.
    pub range_sigmas: f64,
    /// Relative error target of the adaptive rule.
    pub rel_tol: f64,
    /// Number of panel doublings allowed per segment.
    pub max_refinements: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            node_count: 64,
            scheme: QuadratureScheme::GaussHermite,
            range_sigmas: 8.0,
            rel_tol: 1e-10,
            max_refinements: 16,
        }
    }
}

impl QuadratureSpec {
    pub fn gauss_hermite(node_count: usize) -> Self {
        QuadratureSpec {
            node_count,
            ..Self::default()
        }
    }

    pub fn adaptive() -> Self {
        QuadratureSpec {
            node_count: 16,
            scheme: QuadratureScheme::AdaptiveTrapezoid,
            ..Self::default()
        }
    }

    /// Gauss-Hermite with enough nodes to resolve the oscillation of g2
    /// across the spread, or the adaptive rule once the spread reaches the
    /// poles of the line shape or needs more than the largest tier.
    pub fn auto_for(params: &EmitterParams, dist: &DetuningDistribution) -> Self {
        if dist.sigma() > GH_RESOLVABLE_RATIO * line_halfwidth(params) {
            return Self::adaptive();
        }
        let cycles = phase_spread_cycles(params, dist);
        GH_TIERS
            .iter()
            .find(|t| cycles <= t.0)
            .map_or_else(Self::adaptive, |t| Self::gauss_hermite(t.1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count < 3 {
            return Err(Error::invalid("quadrature node_count must be >= 3"));
        }
        if self.scheme == QuadratureScheme::AdaptiveTrapezoid {
            if !(self.range_sigmas >= 4.0) {
                return Err(Error::invalid("quadrature range_sigmas must be >= 4"));
            }
            if !(self.rel_tol > 0.0) {
                return Err(Error::invalid("quadrature rel_tol must be > 0"));
            }
        }
        Ok(())
    }
}

// C(Δ)^2 has poles about one line half-width off the real axis, which caps
// how wide a Gaussian 64 Hermite nodes can integrate it over.
const GH_RESOLVABLE_RATIO: f64 = 0.5;

// (phase cycles, nodes). Worst absolute errors measured over Ω up to 120 Γ,
// Γ⊥ up to 20 Γ and sigma up to half the line width: 8e-10, 8e-8, 1e-7, 1e-8.
const GH_TIERS: [(f64, usize); 4] = [(0.1, 64), (0.2, 128), (0.3, 256), (0.5, 400)];

/// Cycles by which `g2(tau, Δ)` at Δ = 4 sigma runs ahead of the centre,
/// at the delay `1/a` where the damped oscillation `tau e^{-a tau}` peaks.
fn phase_spread_cycles(params: &EmitterParams, dist: &DetuningDistribution) -> f64 {
    let w0 = params.omega().hypot(params.delta() + dist.mean());
    let w4 = w0.hypot(4.0 * dist.sigma());
    let a = 0.5 * (params.gamma() + params.gamma_perp());
    (w4 - w0) / (2.0 * PI * E * a)
}

/// Half width of `C(Δ)^2`'s Lorentzian core,
/// `sqrt(gamma_perp^2 + omega^2 gamma_perp / gamma)`.
pub fn line_halfwidth(params: &EmitterParams) -> f64 {
    let gp = params.gamma_perp();
    (gp * gp + params.omega() * params.omega() * gp / params.gamma()).sqrt()
}

pub fn g2_diffused(
    params: &EmitterParams,
    dist: &DetuningDistribution,
    tau: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    Ok(g2_diffused_curve(params, dist, &[tau], quad)?[0])
}

pub fn g2_diffused_curve(
    params: &EmitterParams,
    dist: &DetuningDistribution,
    taus: &[f64],
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    averaged(params, dist, taus, quad, 2)
}

/// Peak-to-dip amplitude of the first Rabi oscillation of the averaged curve,
/// relative to the fixed-detuning curve at the distribution mean.
pub fn contrast_reduction(params: &EmitterParams, dist: &DetuningDistribution) -> Result<f64> {
    params.validate()?;
    let center = params.detuned(params.delta() + dist.mean());
    let reference = EmitterParams::new(params.gamma(), params.gamma_c(), center.effective_omega(), 0.0)?;
    let (t_peak, t_dip) = first_peak_and_dip(&reference).ok_or(Error::NotOscillatory)?;
    let (gp, go) = (params.gamma(), params.gamma_perp());
    let w_eff = center.effective_omega();
    let resonant = g2_for(gp, go, w_eff, t_peak).value - g2_for(gp, go, w_eff, t_dip).value;
    if dist.is_degenerate() {
        return Ok(1.0);
    }
    let quad = QuadratureSpec::auto_for(params, dist);
    let avg = g2_diffused_curve(params, dist, &[t_peak, t_dip], &quad)?;
    Ok((avg[0] - avg[1]) / resonant)
}

/// Weighted average with `C(Δ)^power`; `power = 2` is the physical case.
pub(crate) fn averaged(
    params: &EmitterParams,
    dist: &DetuningDistribution,
    taus: &[f64],
    quad: &QuadratureSpec,
    power: i32,
) -> Result<Vec<f64>> {
    params.validate()?;
    quad.validate()?;
    if dist.is_degenerate() {
        let p = params.detuned(params.delta() + dist.mean());
        return Ok(taus
            .iter()
            .map(|&t| g2_for(p.gamma(), p.gamma_perp(), p.effective_omega(), t).value)
            .collect());
    }
    let integrand = Integrand::new(params, power);
    match quad.scheme {
        QuadratureScheme::GaussHermite => {
            let rule = hermite_rule(quad.node_count)?;
            let s2 = std::f64::consts::SQRT_2 * dist.sigma();
            let samples: Vec<(f64, f64)> = rule
                .iter()
                .map(|&(x, w)| (params.delta() + dist.mean() + s2 * x, w))
                .collect();
            let den: f64 = samples.iter().map(|&(d, w)| w * integrand.weight(d)).sum();
            Ok(taus
                .par_iter()
                .map(|&t| {
                    let num: f64 = samples
                        .iter()
                        .map(|&(d, w)| w * integrand.weight(d) * integrand.g2(d, t))
                        .sum();
                    num / den
                })
                .collect())
        }
        QuadratureScheme::AdaptiveTrapezoid => {
            let segments = breakpoints(params, dist, quad.range_sigmas);
            taus.par_iter()
                .map(|&t| adaptive_ratio(&integrand, dist, params.delta(), &segments, t, quad))
                .collect()
        }
    }
}

struct Integrand {
    gamma: f64,
    gamma_perp: f64,
    omega: f64,
    power: i32,
}

impl Integrand {
    fn new(params: &EmitterParams, power: i32) -> Self {
        Integrand {
            gamma: params.gamma(),
            gamma_perp: params.gamma_perp(),
            omega: params.omega(),
            power,
        }
    }

    /// `C(Δ)^power` at total detuning `delta`.
    fn weight(&self, delta: f64) -> f64 {
        emission_rate_for(self.gamma, self.gamma_perp, self.omega, delta).powi(self.power)
    }

    fn g2(&self, delta: f64, tau: f64) -> f64 {
        g2_for(self.gamma, self.gamma_perp, self.omega.hypot(delta), tau).value
    }
}

thread_local! {
    static HERMITE_RULES: RefCell<HashMap<usize, Rc<Vec<(f64, f64)>>>> = RefCell::new(HashMap::new());
}

fn hermite_rule(n: usize) -> Result<Rc<Vec<(f64, f64)>>> {
    HERMITE_RULES.with(|cache| {
        if let Some(rule) = cache.borrow().get(&n) {
            return Ok(rule.clone());
        }
        let gh = GaussHermite::new(n)
            .map_err(|_| Error::invalid(format!("cannot build a {n}-node Gauss-Hermite rule")))?;
        let rule = Rc::new(gh.as_node_weight_pairs().to_vec());
        cache.borrow_mut().insert(n, rule.clone());
        Ok(rule)
    })
}

/// Sample-space breakpoints: geometric around the line centre, plus a few
/// sigma marks so that both the Lorentzian core and the Gaussian envelope
/// are resolved.
fn breakpoints(params: &EmitterParams, dist: &DetuningDistribution, range_sigmas: f64) -> Vec<f64> {
    let lo = dist.mean() - range_sigmas * dist.sigma();
    let hi = dist.mean() + range_sigmas * dist.sigma();
    let peak = -params.delta();
    let w = line_halfwidth(params);
    let mut pts = vec![lo, hi, peak, dist.mean()];
    let mut r = w;
    while r < hi - lo {
        pts.push(peak - r);
        pts.push(peak + r);
        r *= 3.0;
    }
    for k in [1.0, 2.0, 3.0, 4.0, 6.0] {
        pts.push(dist.mean() - k * dist.sigma());
        pts.push(dist.mean() + k * dist.sigma());
    }
    pts.retain(|&x| x >= lo && x <= hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (hi - lo));
    pts
}

fn adaptive_ratio(
    f: &Integrand,
    dist: &DetuningDistribution,
    delta0: f64,
    segments: &[f64],
    tau: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let eval = |x: f64| {
        let d = delta0 + x;
        let w = dist.density(x) * f.weight(d);
        (w, w * f.g2(d, tau))
    };
    let mut den = 0.0;
    let mut num = 0.0;
    let mut den_err = 0.0;
    let mut num_err = 0.0;
    let mut pending = Vec::new();
    for seg in segments.windows(2) {
        let s = Segment::new(seg[0], seg[1], quad.node_count, &eval);
        pending.push(s);
    }
    let total_den = pending.iter().map(|s| s.den).sum::<f64>();
    for mut s in pending {
        let mut converged = false;
        for _ in 0..quad.max_refinements {
            let prev = (s.den, s.num);
            s.refine(&eval);
            let ed = (s.den - prev.0).abs() / 3.0;
            let en = (s.num - prev.1).abs() / 3.0;
            // Segment budget proportional to its share of the integral, with a
            // floor so that negligible tails do not stall the loop.
            let budget = quad.rel_tol * (s.den.abs().max(1e-3 * total_den.abs()));
            if ed <= budget && en <= budget {
                den += s.den + (s.den - prev.0) / 3.0;
                num += s.num + (s.num - prev.1) / 3.0;
                den_err += ed;
                num_err += en;
                converged = true;
                break;
            }
        }
        if !converged {
            let achieved = (s.den_err_hint + s.num_err_hint) / total_den.abs().max(f64::MIN_POSITIVE);
            return Err(Error::QuadratureNotConverged { achieved });
        }
    }
    let achieved = (den_err + num_err) / den.abs().max(f64::MIN_POSITIVE);
    if !(den > 0.0) || !achieved.is_finite() {
        return Err(Error::QuadratureNotConverged { achieved });
    }
    Ok(num / den)
}

/// Composite trapezoid sums on one segment, refined by panel doubling.
struct Segment {
    a: f64,
    h: f64,
    panels: usize,
    den: f64,
    num: f64,
    den_err_hint: f64,
    num_err_hint: f64,
}

impl Segment {
    fn new(a: f64, b: f64, panels: usize, eval: &impl Fn(f64) -> (f64, f64)) -> Self {
        let h = (b - a) / panels as f64;
        let (mut den, mut num) = (0.0, 0.0);
        for i in 0..=panels {
            let (d, n) = eval(a + i as f64 * h);
            let c = if i == 0 || i == panels { 0.5 } else { 1.0 };
            den += c * d;
            num += c * n;
        }
        Segment {
            a,
            h,
            panels,
            den: den * h,
            num: num * h,
            den_err_hint: f64::INFINITY,
            num_err_hint: f64::INFINITY,
        }
    }

    fn refine(&mut self, eval: &impl Fn(f64) -> (f64, f64)) {
        let (mut den, mut num) = (0.0, 0.0);
        for i in 0..self.panels {
            let (d, n) = eval(self.a + (i as f64 + 0.5) * self.h);
            den += d;
            num += n;
        }
        let new_den = 0.5 * self.den + 0.5 * self.h * den;
        let new_num = 0.5 * self.num + 0.5 * self.h * num;
        self.den_err_hint = (new_den - self.den).abs() / 3.0;
        self.num_err_hint = (new_num - self.num).abs() / 3.0;
        self.den = new_den;
        self.num = new_num;
        self.h *= 0.5;
        self.panels *= 2;
    }
}
