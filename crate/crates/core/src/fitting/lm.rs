use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};
use crate::types::{BandPoint, FitParam, FitResult};

/// A least-squares problem over a registry model.
pub struct FitProblem {
    pub model: Box<dyn Model>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Per-point one-sigma uncertainties; unit weights when absent.
    pub y_sigma: Option<Vec<f64>>,
    pub initial_guess: Vec<f64>,
    /// Parameters held at the given value, by name.
    pub fixed_params: BTreeMap<String, f64>,
}

impl FitProblem {
    pub fn new(model: Box<dyn Model>, x: Vec<f64>, y: Vec<f64>, initial_guess: Vec<f64>) -> Self {
        FitProblem {
            model,
            x,
            y,
            y_sigma: None,
            initial_guess,
            fixed_params: BTreeMap::new(),
        }
    }

    pub fn with_sigma(mut self, y_sigma: Vec<f64>) -> Self {
        self.y_sigma = Some(y_sigma);
        self
    }

    pub fn fix(mut self, name: &str, value: f64) -> Self {
        self.fixed_params.insert(name.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let names = self.model.param_names();
        if self.x.len() != self.y.len() {
            return Err(Error::invalid(format!("x has {} points but y has {}", self.x.len(), self.y.len())));
        }
        if self.initial_guess.len() != names.len() {
            return Err(Error::invalid(format!(
                "model `{}` has {} parameters, initial guess has {}",
                self.model.name(),
                names.len(),
                self.initial_guess.len()
            )));
        }
        if let Some(s) = &self.y_sigma {
            if s.len() != self.y.len() {
                return Err(Error::invalid("y_sigma length differs from y"));
            }
            if let Some(i) = s.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::invalid(format!("y_sigma[{i}] must be finite and > 0")));
            }
        }
        if let Some(i) = self.x.iter().chain(&self.y).position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("data value {i} is not finite")));
        }
        for name in self.fixed_params.keys() {
            if !names.contains(&name.as_str()) {
                return Err(Error::invalid(format!("model `{}` has no parameter `{name}`", self.model.name())));
            }
        }
        for (i, ((lo, hi), name)) in self.model.bounds().into_iter().zip(names).enumerate() {
            let v = self.fixed_params.get(*name).copied().unwrap_or(self.initial_guess[i]);
            if !(v >= lo && v <= hi) {
                return Err(Error::invalid(format!("`{name}` = {v} lies outside its bounds [{lo}, {hi}]")));
            }
        }
        let free = names.len() - self.fixed_params.len();
        if free == 0 {
            return Err(Error::invalid("every parameter is fixed"));
        }
        if self.x.len() <= free {
            return Err(Error::invalid(format!(
                "{} points cannot constrain {free} free parameters with dof >= 1",
                self.x.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative step size, measured in the scaled parameter norm.
    pub xtol: f64,
    /// Relative cost change.
    pub ftol: f64,
    /// Width of the reported bands in standard deviations.
    pub sigma_level: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            xtol: 1e-8,
            ftol: 1e-10,
            sigma_level: 2.0,
        }
    }
}

/// Singular values below this fraction of the largest mark a rank deficiency.
const RANK_RTOL: f64 = 1e-10;

pub fn fit(problem: &FitProblem) -> Result<FitResult> {
    fit_with(problem, &FitOptions::default())
}

/// Levenberg-Marquardt with Marquardt's diagonal scaling and Nielsen's damping
/// update. Non-convergence returns the best point with `converged = false`.
pub fn fit_with(problem: &FitProblem, opts: &FitOptions) -> Result<FitResult> {
    problem.validate()?;
    let model = problem.model.as_ref();
    let names = model.param_names();
    let bounds = model.bounds();
    let mut p: Vec<f64> = names
        .iter()
        .zip(&problem.initial_guess)
        .map(|(n, &g)| problem.fixed_params.get(*n).copied().unwrap_or(g))
        .collect();
    let free: Vec<usize> = (0..names.len())
        .filter(|&i| !problem.fixed_params.contains_key(names[i]))
        .collect();
    let typical: Vec<f64> = (0..p.len()).map(|j| model.typical_scale(j, &p)).collect();
    let weights: Vec<f64> = match &problem.y_sigma {
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; problem.y.len()],
    };
    let ctx = Ctx {
        model,
        x: &problem.x,
        y: &problem.y,
        w: &weights,
        free: &free,
        bounds: &bounds,
        typical: &typical,
    };
    // Cost below this is indistinguishable from an exact fit.
    let roundoff = 0.5 * f64::EPSILON.powi(2) * ctx.y.iter().zip(ctx.w).map(|(y, w)| (y * w).powi(2)).sum::<f64>();

    let mut r = ctx.residuals(&p)?;
    let mut cost = 0.5 * r.norm_squared();
    let mut jac = ctx.jacobian(&p)?;
    let mut mu = 1e-3;
    let mut nu = 2.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        // Work in column-normalised variables so that mu is dimensionless.
        let norms: DVector<f64> = DVector::from_iterator(free.len(), jac.column_iter().map(|c| c.norm().max(f64::MIN_POSITIVE)));
        let js = DMatrix::from_fn(jac.nrows(), free.len(), |i, j| jac[(i, j)] / norms[j]);
        let g = jac.transpose() * &r;
        let mut a = js.transpose() * &js;
        for i in 0..free.len() {
            a[(i, i)] += mu;
        }
        let Some(ch) = a.cholesky() else {
            break;
        };
        let step = ch.solve(&(-(js.transpose() * &r))).component_div(&norms);
        let trial = ctx.apply(&p, &step);
        let actual_step = DVector::from_iterator(free.len(), free.iter().map(|&j| trial[j] - p[j]));
        let scaled_step = actual_step.component_mul(&norms).norm();
        let scaled_p = DVector::from_iterator(free.len(), free.iter().map(|&j| p[j])).component_mul(&norms).norm();
        let small_step = scaled_step <= opts.xtol * (scaled_p + opts.xtol);

        let trial_r = match ctx.residuals(&trial) {
            Ok(v) => v,
            Err(_) => {
                mu *= nu;
                nu *= 2.0;
                continue;
            }
        };
        let trial_cost = 0.5 * trial_r.norm_squared();
        let predicted = -(g.dot(&actual_step) + 0.5 * (&jac * &actual_step).norm_squared());
        let rho = if predicted > 0.0 { (cost - trial_cost) / predicted } else { -1.0 };

        if trial_cost <= cost && (rho > 0.0 || trial_cost == cost) {
            let small_cost = (cost - trial_cost).abs() <= opts.ftol * cost || trial_cost <= roundoff;
            p = trial;
            r = trial_r;
            cost = trial_cost;
            if small_step && small_cost {
                converged = true;
                break;
            }
            jac = ctx.jacobian(&p)?;
            mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
        } else {
            // A rejected step that is already below the tolerance means no
            // representable improvement is left.
            if small_step && (cost <= roundoff || mu > 1e12) {
                converged = true;
                break;
            }
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                break;
            }
        }
    }

    let dof = problem.y.len() - free.len();
    let jac = ctx.jacobian(&p)?;
    let residual_norm = 2.0 * cost;
    let cov_free = covariance(&jac, residual_norm / dof as f64, names, &free)?;
    let n = names.len();
    let mut covariance = vec![vec![0.0; n]; n];
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            covariance[i][j] = cov_free[(a, b)];
        }
    }
    let params = names
        .iter()
        .enumerate()
        .map(|(i, name)| FitParam {
            name: name.to_string(),
            value: p[i],
            sigma: covariance[i][i].max(0.0).sqrt(),
            fixed: !free.contains(&i),
        })
        .collect();
    let mut result = FitResult {
        params,
        covariance,
        residual_norm,
        dof,
        sigma_level: opts.sigma_level,
        confidence_bands: vec![],
        converged,
        iterations,
    };
    result.confidence_bands = confidence_bands(model, &result, &problem.x)?;
    Ok(result)
}

/// First-order propagated bands of a fitted model at `xs`.
pub fn confidence_bands(model: &dyn Model, fit: &FitResult, xs: &[f64]) -> Result<Vec<BandPoint>> {
    let p = fit.values();
    let free: Vec<usize> = (0..p.len()).filter(|&i| !fit.params[i].fixed).collect();
    let typical: Vec<f64> = (0..p.len()).map(|j| model.typical_scale(j, &p)).collect();
    let bounds = model.bounds();
    let ones = vec![1.0; xs.len()];
    let zeros = vec![0.0; xs.len()];
    let ctx = Ctx {
        model,
        x: xs,
        y: &zeros,
        w: &ones,
        free: &free,
        bounds: &bounds,
        typical: &typical,
    };
    let y = model.eval(xs, &p)?;
    // Jacobian of the residual is minus the model derivative.
    let jac = ctx.jacobian(&p)?;
    Ok((0..xs.len())
        .map(|i| {
            let mut var = 0.0;
            for (a, &pa) in free.iter().enumerate() {
                for (b, &pb) in free.iter().enumerate() {
                    var += jac[(i, a)] * fit.covariance[pa][pb] * jac[(i, b)];
                }
            }
            let half = fit.sigma_level * var.max(0.0).sqrt();
            BandPoint {
                x: xs[i],
                y: y[i],
                lo: y[i] - half,
                hi: y[i] + half,
            }
        })
        .collect())
}

fn covariance(jac: &DMatrix<f64>, s2: f64, names: &[&str], free: &[usize]) -> Result<DMatrix<f64>> {
    let k = free.len();
    // Column equilibration keeps the conditioning check unit-free.
    let norms: Vec<f64> = (0..k).map(|j| jac.column(j).norm()).collect();
    if let Some(j) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::RankDeficient {
            combination: names[free[j]].to_string(),
        });
    }
    let scaled = DMatrix::from_fn(jac.nrows(), k, |i, j| jac[(i, j)] / norms[j]);
    let svd = scaled.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let s = &svd.singular_values;
    let smax = s.max();
    let (imin, smin) = s.argmin();
    if smin <= RANK_RTOL * smax {
        let row = v_t.row(imin);
        let mut terms: Vec<(f64, usize)> = (0..k).map(|j| (row[j] / norms[j], j)).collect();
        let big = terms.iter().map(|t| t.0.abs()).fold(0.0, f64::max);
        terms.retain(|t| t.0.abs() > 1e-6 * big);
        let combination = terms
            .iter()
            .map(|(c, j)| format!("{:+.3e}*{}", c / big, names[free[*j]]))
            .collect::<Vec<_>>()
            .join(" ");
        return Err(Error::RankDeficient { combination });
    }
    // (J^T J)^-1 = D^-1 V S^-2 V^T D^-1 with D the column norms.
    let mut cov = DMatrix::<f64>::zeros(k, k);
    for (m, sv) in s.iter().enumerate() {
        let v = v_t.row(m);
        for a in 0..k {
            for b in 0..k {
                cov[(a, b)] += v[a] * v[b] / (sv * sv);
            }
        }
    }
    Ok(DMatrix::from_fn(k, k, |a, b| s2 * cov[(a, b)] / (norms[a] * norms[b])))
}

struct Ctx<'a> {
    model: &'a dyn Model,
    x: &'a [f64],
    y: &'a [f64],
    w: &'a [f64],
    free: &'a [usize],
    bounds: &'a [(f64, f64)],
    typical: &'a [f64],
}

impl Ctx<'_> {
    fn residuals(&self, p: &[f64]) -> Result<DVector<f64>> {
        let f = self.model.eval(self.x, p)?;
        let r = DVector::from_iterator(self.x.len(), (0..self.x.len()).map(|i| (self.y[i] - f[i]) * self.w[i]));
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("model `{}` is not finite at {p:?}", self.model.name())));
        }
        Ok(r)
    }

    fn apply(&self, p: &[f64], step: &DVector<f64>) -> Vec<f64> {
        let mut out = p.to_vec();
        for (a, &j) in self.free.iter().enumerate() {
            let (lo, hi) = self.bounds[j];
            out[j] = (p[j] + step[a]).clamp(lo, hi);
        }
        out
    }

    /// Derivatives of the weighted residuals with respect to the free parameters.
    fn jacobian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.x.len();
        let mut jac = DMatrix::zeros(n, self.free.len());
        if let Some(grad) = self.model.jacobian(self.x, p) {
            let grad = grad?;
            for (a, &j) in self.free.iter().enumerate() {
                for i in 0..n {
                    jac[(i, a)] = -grad[i][j] * self.w[i];
                }
            }
            return Ok(jac);
        }
        for (a, &j) in self.free.iter().enumerate() {
            let h = 6e-6 * p[j].abs().max(self.typical[j]);
            let (lo, hi) = self.bounds[j];
            let (up, down) = ((p[j] + h).min(hi), (p[j] - h).max(lo));
            let mut pu = p.to_vec();
            pu[j] = up;
            let mut pd = p.to_vec();
            pd[j] = down;
            let fu = self.model.eval(self.x, &pu)?;
            let fd = self.model.eval(self.x, &pd)?;
            for i in 0..n {
                jac[(i, a)] = -(fu[i] - fd[i]) / (up - down) * self.w[i];
            }
        }
        Ok(jac)
    }
}

/// Weighted straight-line fit `y = slope * x + intercept` in closed form.
///
/// The covariance is scaled by the residual variance, as in [`fit`]. A
/// two-point fit has none, so its `y_sigma` are taken as absolute.
pub fn weighted_line_fit(x: &[f64], y: &[f64], y_sigma: Option<&[f64]>, sigma_level: f64) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::invalid("x and y differ in length"));
    }
    if x.len() < 2 {
        return Err(Error::invalid("a line fit needs at least two points"));
    }
    let w: Vec<f64> = match y_sigma {
        Some(s) => {
            if s.len() != y.len() || s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::invalid("y_sigma must match y and be finite and > 0"));
            }
            s.iter().map(|v| 1.0 / (v * v)).collect()
        }
        None => vec![1.0; y.len()],
    };
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ym = y.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(x, w)| w * (x - xm).powi(2)).sum();
    let xspan = x.iter().fold(0.0f64, |m, v| m.max((v - xm).abs()));
    if !(sxx > 0.0) || xspan <= 1e-12 * xm.abs() {
        return Err(Error::invalid("line fit needs at least two distinct x values"));
    }
    let sxy: f64 = x.iter().zip(y).zip(&w).map(|((x, y), w)| w * (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let chi2: f64 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((x, y), w)| w * (y - slope * x - intercept).powi(2))
        .sum();
    let dof = x.len() - 2;
    let s2 = if dof == 0 {
        if y_sigma.is_none() {
            return Err(Error::invalid("two unweighted points leave no residual variance"));
        }
        1.0
    } else {
        chi2 / dof as f64
    };
    let var_slope = s2 / sxx;
    let cov_si = -xm * var_slope;
    let var_intercept = s2 / sw + xm * xm * var_slope;
    let covariance = vec![vec![var_slope, cov_si], vec![cov_si, var_intercept]];
    let params = vec![
        FitParam {
            name: "slope".into(),
            value: slope,
            sigma: var_slope.sqrt(),
            fixed: false,
        },
        FitParam {
            name: "intercept".into(),
            value: intercept,
            sigma: var_intercept.sqrt(),
            fixed: false,
        },
    ];
    let confidence_bands = x
        .iter()
        .map(|&xi| {
            let yi = slope * xi + intercept;
            let var = xi * xi * var_slope + 2.0 * xi * cov_si + var_intercept;
            let half = sigma_level * var.max(0.0).sqrt();
            BandPoint {
                x: xi,
                y: yi,
                lo: yi - half,
                hi: yi + half,
            }
        })
        .collect();
    Ok(FitResult {
        params,
        covariance,
        residual_norm: chi2,
        dof,
        sigma_level,
        confidence_bands,
        converged: true,
        iterations: 0,
    })
}
