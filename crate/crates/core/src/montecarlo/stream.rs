use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::jump::{survival, NoJump, Outcome, GROUND};
use super::process::{open_unit, DiffusionProcess};
use crate::error::{Error, Result};
use crate::types::EmitterParams;

/// Detected photon arrival times of one simulated or recorded experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonStream {
    arrival_times: Vec<f64>,
    total_duration: f64,
    seed: u64,
}

impl PhotonStream {
    pub fn new(arrival_times: Vec<f64>, total_duration: f64, seed: u64) -> Result<Self> {
        if !(total_duration.is_finite() && total_duration > 0.0) {
            return Err(Error::invalid("stream duration must be > 0"));
        }
        if let Some(i) = arrival_times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!(
                "arrival time #{} is not after its predecessor",
                i + 1
            )));
        }
        if arrival_times
            .first()
            .is_some_and(|&t| !(t >= 0.0))
            || arrival_times.last().is_some_and(|&t| !(t <= total_duration))
        {
            return Err(Error::invalid("arrival times must lie within [0, duration]"));
        }
        Ok(PhotonStream {
            arrival_times,
            total_duration,
            seed,
        })
    }

    pub fn arrival_times(&self) -> &[f64] {
        &self.arrival_times
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.arrival_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrival_times.is_empty()
    }

    pub fn mean_rate(&self) -> f64 {
        self.len() as f64 / self.total_duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamOptions {
    pub detection_efficiency: f64,
    /// Uncorrelated background detections, 1/s.
    pub background_rate: f64,
    /// Length of the independently seeded pieces the stream is simulated in, s.
    /// Defaults to `1e5 / gamma`.
    pub chunk_duration: Option<f64>,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions {
            detection_efficiency: 1.0,
            background_rate: 0.0,
            chunk_duration: None,
        }
    }
}

pub fn simulate_stream(
    params: &EmitterParams,
    proc: &DiffusionProcess,
    duration: f64,
    detection_efficiency: f64,
) -> Result<PhotonStream> {
    let opts = StreamOptions {
        detection_efficiency,
        ..StreamOptions::default()
    };
    simulate_stream_with(params, proc, duration, &opts)
}

/// Quantum-jump photon stream. Each chunk restarts from the ground state with
/// its own random stream, so the output is independent of thread count.
pub fn simulate_stream_with(
    params: &EmitterParams,
    proc: &DiffusionProcess,
    duration: f64,
    opts: &StreamOptions,
) -> Result<PhotonStream> {
    params.validate()?;
    proc.validate()?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid("stream duration must be > 0"));
    }
    let eta = opts.detection_efficiency;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid("detection efficiency must lie in (0, 1]"));
    }
    if !(opts.background_rate.is_finite() && opts.background_rate >= 0.0) {
        return Err(Error::invalid("background rate must be finite and >= 0"));
    }
    let chunk = opts.chunk_duration.unwrap_or(1e5 / params.gamma());
    if !(chunk.is_finite() && chunk > 0.0) {
        return Err(Error::invalid("chunk duration must be > 0"));
    }

    let mut master = ChaCha8Rng::seed_from_u64(proc.seed);
    let schedule = proc.schedule(duration, &mut master);
    let n_chunks = (duration / chunk).ceil().max(1.0) as u64;

    let pieces: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c as f64 * chunk;
            let end = ((c + 1) as f64 * chunk).min(duration);
            let mut rng = ChaCha8Rng::seed_from_u64(proc.seed);
            rng.set_stream(c + 1);
            let mut times = if params.omega() > 0.0 {
                emit_chunk(params, &schedule, start, end, eta, &mut rng)
            } else {
                Vec::new()
            };
            if opts.background_rate > 0.0 {
                let mean = opts.background_rate * (end - start);
                let n = Poisson::new(mean).map(|p| p.sample(&mut rng) as usize).unwrap_or(0);
                times.extend((0..n).map(|_| start + (end - start) * rng.gen::<f64>()));
                times.sort_by(f64::total_cmp);
            }
            times
        })
        .collect();

    let mut all: Vec<f64> = pieces.into_iter().flatten().collect();
    all.dedup();
    PhotonStream::new(all, duration, proc.seed)
}

fn emit_chunk(
    params: &EmitterParams,
    schedule: &[(f64, f64)],
    start: f64,
    end: f64,
    eta: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut out = Vec::new();
    let mut x = GROUND;
    let mut t = start;
    let mut threshold = open_unit(rng);
    // First schedule entry in force at `start`.
    let mut seg = schedule.partition_point(|s| s.0 <= start).saturating_sub(1);
    while t < end {
        let seg_end = schedule.get(seg + 1).map_or(end, |s| s.0.min(end));
        let nj = NoJump::new(
            params.gamma(),
            params.gamma_perp(),
            params.omega(),
            params.delta() + schedule[seg].1,
        );
        loop {
            match nj.run(t, x, threshold, seg_end) {
                Outcome::Emission(te) => {
                    if eta >= 1.0 || rng.gen::<f64>() < eta {
                        out.push(te);
                    }
                    x = GROUND;
                    t = te;
                    threshold = open_unit(rng);
                }
                Outcome::Horizon(xh) => {
                    x = xh;
                    t = seg_end;
                    break;
                }
            }
        }
        seg += 1;
    }
    out
}

/// Ensemble mean of the conditional excited-state population under constant
/// drive from the ground state, with its standard error, at each grid time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    pub t_grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

const TRAJECTORY_BATCH: usize = 256;

pub fn trajectory_populations(
    params: &EmitterParams,
    t_grid: &[f64],
    n_trajectories: usize,
    seed: u64,
) -> Result<PopulationEstimate> {
    params.validate()?;
    if n_trajectories < 2 {
        return Err(Error::invalid("need at least two trajectories"));
    }
    if t_grid.windows(2).any(|w| !(w[1] >= w[0])) || t_grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::invalid("time grid must be ordered and start at t >= 0"));
    }
    let nj = NoJump::new(params.gamma(), params.gamma_perp(), params.omega(), params.delta());
    let n_batches = n_trajectories.div_ceil(TRAJECTORY_BATCH);
    let sums: Vec<(Vec<f64>, Vec<f64>)> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let count = TRAJECTORY_BATCH.min(n_trajectories - b * TRAJECTORY_BATCH);
            let mut s1 = vec![0.0; t_grid.len()];
            let mut s2 = vec![0.0; t_grid.len()];
            for _ in 0..count {
                let mut x = GROUND;
                let mut t = 0.0;
                let mut threshold = open_unit(&mut rng);
                for (k, &target) in t_grid.iter().enumerate() {
                    loop {
                        match nj.run(t, x, threshold, target) {
                            Outcome::Emission(te) => {
                                x = GROUND;
                                t = te;
                                threshold = open_unit(&mut rng);
                            }
                            Outcome::Horizon(xh) => {
                                x = xh;
                                t = target;
                                break;
                            }
                        }
                    }
                    let p = x[1] / survival(&x);
                    s1[k] += p;
                    s2[k] += p * p;
                }
            }
            (s1, s2)
        })
        .collect();

    let n = n_trajectories as f64;
    let mut s1 = vec![0.0; t_grid.len()];
    let mut s2 = vec![0.0; t_grid.len()];
    for (a, b) in &sums {
        for k in 0..t_grid.len() {
            s1[k] += a[k];
            s2[k] += b[k];
        }
    }
    let mean: Vec<f64> = s1.iter().map(|s| s / n).collect();
    let std_error = s2
        .iter()
        .zip(&mean)
        .map(|(s, m)| ((s / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt())
        .collect();
    Ok(PopulationEstimate {
        t_grid: t_grid.to_vec(),
        mean,
        std_error,
    })
}
