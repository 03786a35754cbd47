use serde::{Deserialize, Serialize};

use super::lm::{fit, FitProblem};
use super::registry::{Gaussian, Lorentzian};
use super::Model;
use crate::error::{Error, Result};
use crate::types::{Estimate, FitResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineShape {
    Lorentzian,
    Gaussian,
}

impl LineShape {
    fn model(self) -> Box<dyn Model> {
        match self {
            LineShape::Lorentzian => Box::new(Lorentzian),
            LineShape::Gaussian => Box::new(Gaussian),
        }
    }
}

/// One PLE scan, sorted by frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PleScan {
    pub id: String,
    pub freq_hz: Vec<f64>,
    pub counts: Vec<f64>,
    /// No resolvable peak, e.g. the emitter was dark during the scan.
    pub dark: bool,
}

impl PleScan {
    /// Sorts the points and flags the scan dark when its maximum does not
    /// stand five Poisson deviations above the median.
    pub fn new(id: impl Into<String>, freq_hz: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if freq_hz.len() != counts.len() || freq_hz.is_empty() {
            return Err(Error::invalid(format!("scan `{id}` has mismatched or empty columns")));
        }
        let mut pts: Vec<(f64, f64)> = freq_hz.into_iter().zip(counts).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (freq_hz, counts): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let dark = !has_peak(&counts);
        Ok(PleScan {
            id,
            freq_hz,
            counts,
            dark,
        })
    }
}

fn has_peak(counts: &[f64]) -> bool {
    let mut sorted = counts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let max = sorted[sorted.len() - 1];
    max - median > 5.0 * (median + 1.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanFit {
    pub id: String,
    pub center: Estimate,
    pub fwhm: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFitReport {
    pub shape: LineShape,
    pub scans: Vec<ScanFit>,
    /// Ids of dark scans left out of every aggregate.
    pub excluded_dark: Vec<String>,
    /// Ids of scans whose fit failed.
    pub excluded_failed: Vec<String>,
    /// Mean single-scan FWHM and its standard error.
    pub mean_fwhm: Estimate,
    /// Gaussian fit of the centre histogram; absent when all centres coincide.
    pub center_histogram: Option<FitResult>,
    /// FWHM of the centre distribution.
    pub center_spread_fwhm: Estimate,
    /// Centre spread combined in quadrature with the single-scan width, so
    /// identical centres give the single-scan width.
    pub inhomogeneous_fwhm: Estimate,
}

/// Fits one scan with Poisson weights, starting from the maximum and the
/// half-maximum crossings.
pub fn fit_scan(scan: &PleScan, shape: LineShape) -> Result<FitResult> {
    let n = scan.counts.len();
    if n < 6 {
        return Err(Error::invalid(format!("scan `{}` has too few points for a line fit", scan.id)));
    }
    let mut sorted = scan.counts.clone();
    sorted.sort_by(f64::total_cmp);
    let offset = sorted[n / 10];
    let (imax, &cmax) = scan
        .counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let half = offset + 0.5 * (cmax - offset);
    let left = (0..imax).rev().find(|&i| scan.counts[i] < half).unwrap_or(0);
    let right = (imax..n).find(|&i| scan.counts[i] < half).unwrap_or(n - 1);
    let step = (scan.freq_hz[n - 1] - scan.freq_hz[0]) / (n - 1) as f64;
    let fwhm = (scan.freq_hz[right] - scan.freq_hz[left]).max(2.0 * step);
    let sigma = scan.counts.iter().map(|c| c.max(1.0).sqrt()).collect();
    let problem = FitProblem::new(
        shape.model(),
        scan.freq_hz.clone(),
        scan.counts.clone(),
        vec![cmax - offset, scan.freq_hz[imax], fwhm, offset],
    )
    .with_sigma(sigma);
    fit(&problem)
}

/// Per-scan widths plus a Gaussian fit to the histogram of line centres.
pub fn histogram_line_fit(scans: &[PleScan], shape: LineShape) -> Result<LineFitReport> {
    let mut fits = Vec::new();
    let mut excluded_dark = Vec::new();
    let mut excluded_failed = Vec::new();
    for scan in scans {
        if scan.dark {
            excluded_dark.push(scan.id.clone());
            continue;
        }
        match fit_scan(scan, shape) {
            Ok(f) if f.converged => fits.push(ScanFit {
                id: scan.id.clone(),
                center: f.require("center")?,
                fwhm: f.require("fwhm")?,
            }),
            _ => excluded_failed.push(scan.id.clone()),
        }
    }
    if fits.len() < 2 {
        return Err(Error::invalid(format!(
            "{} usable scans; at least two are needed ({} dark, {} failed)",
            fits.len(),
            excluded_dark.len(),
            excluded_failed.len()
        )));
    }
    let widths: Vec<f64> = fits.iter().map(|f| f.fwhm.value).collect();
    let mean_fwhm = mean_and_error(&widths);
    let centers: Vec<f64> = fits.iter().map(|f| f.center.value).collect();

    let (center_histogram, center_spread_fwhm) = if spread_is_resolved(&centers, mean_fwhm.value) {
        let fit = center_histogram_fit(&centers)?;
        let spread = fit.require("fwhm")?;
        (Some(fit), spread)
    } else {
        (None, Estimate { value: 0.0, sigma: 0.0 })
    };
    let total = center_spread_fwhm.value.hypot(mean_fwhm.value);
    let inhomogeneous_fwhm = Estimate {
        value: total,
        sigma: (center_spread_fwhm.value * center_spread_fwhm.sigma).hypot(mean_fwhm.value * mean_fwhm.sigma) / total,
    };
    Ok(LineFitReport {
        shape,
        scans: fits,
        excluded_dark,
        excluded_failed,
        mean_fwhm,
        center_histogram,
        center_spread_fwhm,
        inhomogeneous_fwhm,
    })
}

fn mean_and_error(v: &[f64]) -> Estimate {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate {
        value: mean,
        sigma: (var / n).sqrt(),
    }
}

fn spread_is_resolved(centers: &[f64], width: f64) -> bool {
    let lo = centers.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo > 1e-9 * width
}

fn center_histogram_fit(centers: &[f64]) -> Result<FitResult> {
    let n = centers.len();
    let stats = mean_and_error(centers);
    let sd = stats.sigma * (n as f64).sqrt();
    let bins = ((n as f64).sqrt().ceil() as usize).clamp(7, 50);
    let lo = stats.value - 4.0 * sd;
    let width = 8.0 * sd / bins as f64;
    let mut counts = vec![0.0; bins];
    for c in centers {
        let k = ((c - lo) / width).floor();
        if k >= 0.0 && (k as usize) < bins {
            counts[k as usize] += 1.0;
        }
    }
    let x: Vec<f64> = (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect();
    let fwhm = 2.0 * (2.0 * std::f64::consts::LN_2).sqrt() * sd;
    let amplitude = n as f64 * width / (sd * (2.0 * std::f64::consts::PI).sqrt());
    let sigma = counts.iter().map(|c: &f64| c.max(1.0).sqrt()).collect();
    let problem = FitProblem::new(Box::new(Gaussian), x, counts, vec![amplitude, stats.value, fwhm, 0.0])
        .with_sigma(sigma)
        .fix("offset", 0.0);
    fit(&problem)
}
