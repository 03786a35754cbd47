use rayon::prelude::*;

use super::stream::PhotonStream;
use crate::error::{Error, Result};
use crate::types::CorrelationCurve;

const PAIR_CHUNK: usize = 1 << 14;

/// Full (multi-stop) coincidence histogram of all photon pairs.
///
/// Bins are centred on `k * bin_width` for `|k| <= floor(max_tau / bin_width)`,
/// so the zero-delay bin is symmetric. A photon is never paired with itself.
pub fn correlate(stream: &PhotonStream, bin_width: f64, max_tau: f64) -> Result<CorrelationCurve> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::invalid("bin width must be > 0"));
    }
    if !(max_tau.is_finite() && max_tau >= bin_width) {
        return Err(Error::invalid("max_tau must be at least one bin width"));
    }
    if stream.len() < 2 {
        return Err(Error::invalid("correlation needs at least two photons"));
    }
    let n = (max_tau / bin_width + 1e-9).floor() as usize;
    let reach = (n as f64 + 0.5) * bin_width;
    let times = stream.arrival_times();

    let partial: Vec<Vec<u64>> = times
        .par_chunks(PAIR_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let base = c * PAIR_CHUNK;
            let mut hist = vec![0u64; n + 1];
            for (i, &ti) in chunk.iter().enumerate() {
                for &tj in &times[base + i + 1..] {
                    let d = tj - ti;
                    if d >= reach {
                        break;
                    }
                    hist[(d / bin_width + 0.5) as usize] += 1;
                }
            }
            hist
        })
        .collect();

    let mut positive = vec![0u64; n + 1];
    for h in &partial {
        for (p, v) in positive.iter_mut().zip(h) {
            *p += v;
        }
    }
    // Ordered pairs: each unordered pair lands once at +d and once at -d.
    let tau_bins: Vec<f64> = (-(n as i64)..=n as i64).map(|k| k as f64 * bin_width).collect();
    let counts: Vec<f64> = (-(n as i64)..=n as i64)
        .map(|k| {
            let c = positive[k.unsigned_abs() as usize];
            (if k == 0 { 2 * c } else { c }) as f64
        })
        .collect();
    CorrelationCurve::new(tau_bins, counts, bin_width)
}

/// Counts expected per bin for an uncorrelated stream with the same rate:
/// `N * rate * bin_width` pairs per side.
pub fn accidental_level(stream: &PhotonStream, bin_width: f64) -> f64 {
    stream.len() as f64 * stream.mean_rate() * bin_width
}
