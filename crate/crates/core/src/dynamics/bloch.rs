//! Time-domain optical Bloch equations in the rotating frame.
//!
//! With `rho_eg = u + i v` the equations read
//!
//! ```text
//! d rho_ee / dt = -gamma rho_ee - omega(t) v
//! d u / dt      = -gamma_perp u - delta v
//! d v / dt      =  delta u - gamma_perp v - omega(t)/2 (1 - 2 rho_ee)
//! ```
//!
//! whose constant-drive fixed point is [`emission_rate`](super::emission_rate).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::EmitterParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    IdealSquare,
    /// `1 - exp(-t / t_r)` on, `exp(-t / t_r)` off, with the 10-90 % time
    /// equal to `rise_time` (so `t_r = rise_time / ln 9`).
    ExponentialRise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseEnvelope {
    duration: f64,
    rise_time: f64,
    shape: PulseShape,
    peak_omega: f64,
}

impl PulseEnvelope {
    pub fn new(duration: f64, rise_time: f64, shape: PulseShape, peak_omega: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::invalid("pulse duration must be > 0"));
        }
        if !(rise_time >= 0.0 && rise_time < duration) {
            return Err(Error::invalid("pulse rise time must lie in [0, duration)"));
        }
        if !(peak_omega.is_finite() && peak_omega >= 0.0) {
            return Err(Error::invalid("peak Rabi frequency must be finite and >= 0"));
        }
        Ok(PulseEnvelope {
            duration,
            rise_time,
            shape,
            peak_omega,
        })
    }

    /// Drive switched on at t = 0 and never switched off.
    pub fn continuous(omega: f64) -> Result<Self> {
        Self::new(f64::INFINITY, 0.0, PulseShape::IdealSquare, omega)
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn rise_time(&self) -> f64 {
        self.rise_time
    }

    pub fn shape(&self) -> PulseShape {
        self.shape
    }

    pub fn peak_omega(&self) -> f64 {
        self.peak_omega
    }

    fn time_constant(&self) -> f64 {
        self.rise_time / 9f64.ln()
    }

    pub fn omega_at(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let square = self.shape == PulseShape::IdealSquare || self.rise_time == 0.0;
        if square {
            return if t < self.duration { self.peak_omega } else { 0.0 };
        }
        let tc = self.time_constant();
        if t < self.duration {
            self.peak_omega * -(-t / tc).exp_m1()
        } else {
            let at_end = -(-self.duration / tc).exp_m1();
            self.peak_omega * at_end * (-(t - self.duration) / tc).exp()
        }
    }
}

/// Density-matrix elements of the two-level system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub rho_ee: f64,
    pub rho_eg: Complex64,
}

impl BlochState {
    pub const GROUND: BlochState = BlochState {
        rho_ee: 0.0,
        rho_eg: Complex64 { re: 0.0, im: 0.0 },
    };

    /// Amount by which `|rho_eg|^2 <= rho_ee (1 - rho_ee)` is violated (<= 0 when physical).
    pub fn positivity_excess(&self) -> f64 {
        self.rho_eg.norm_sqr() - self.rho_ee * (1.0 - self.rho_ee)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Slack allowed on the positivity and population bounds.
    pub invariant_tol: f64,
    pub max_steps: usize,
}

impl Default for BlochOptions {
    fn default() -> Self {
        BlochOptions {
            rtol: 1e-9,
            atol: 1e-12,
            invariant_tol: 1e-7,
            max_steps: 10_000_000,
        }
    }
}

pub fn evolve_pulse(
    params: &EmitterParams,
    envelope: &PulseEnvelope,
    t_grid: &[f64],
) -> Result<Vec<BlochState>> {
    evolve_pulse_from(params, envelope, BlochState::GROUND, t_grid, &BlochOptions::default())
}

/// Integrates from `initial` at t = 0 and samples the state at every grid time.
pub fn evolve_pulse_from(
    params: &EmitterParams,
    envelope: &PulseEnvelope,
    initial: BlochState,
    t_grid: &[f64],
    opts: &BlochOptions,
) -> Result<Vec<BlochState>> {
    params.validate()?;
    if t_grid.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::invalid("time grid must be ordered"));
    }
    if t_grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::invalid("time grid must start at t >= 0"));
    }
    check_state(&initial, 0.0, opts.invariant_tol)?;

    let rhs = BlochRhs {
        gamma: params.gamma(),
        gamma_perp: params.gamma_perp(),
        delta: params.delta(),
        envelope: *envelope,
    };
    let scale = params.gamma()
        + params.gamma_perp()
        + envelope.peak_omega()
        + params.delta().abs();
    let mut solver = Dopri5::new(rhs, opts, 0.01 / scale);

    let mut y = [initial.rho_ee, initial.rho_eg.re, initial.rho_eg.im];
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        // Never step across the drive discontinuity at the end of the pulse.
        let kink = envelope.duration();
        if t < kink && kink < target {
            solver.advance(&mut t, &mut y, kink)?;
        }
        solver.advance(&mut t, &mut y, target)?;
        out.push(to_state(&y));
    }
    Ok(out)
}

fn to_state(y: &[f64; 3]) -> BlochState {
    BlochState {
        rho_ee: y[0],
        rho_eg: Complex64::new(y[1], y[2]),
    }
}

fn check_state(s: &BlochState, time: f64, tol: f64) -> Result<()> {
    let excess = s
        .positivity_excess()
        .max(-s.rho_ee)
        .max(s.rho_ee - 1.0);
    if excess > tol || !excess.is_finite() {
        return Err(Error::InvariantViolation { time, excess });
    }
    Ok(())
}

struct BlochRhs {
    gamma: f64,
    gamma_perp: f64,
    delta: f64,
    envelope: PulseEnvelope,
}

impl BlochRhs {
    fn eval(&self, t: f64, y: &[f64; 3]) -> [f64; 3] {
        let omega = self.envelope.omega_at(t);
        let [w, u, v] = *y;
        [
            -self.gamma * w - omega * v,
            -self.gamma_perp * u - self.delta * v,
            self.delta * u - self.gamma_perp * v - 0.5 * omega * (1.0 - 2.0 * w),
        ]
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Dopri5<'o> {
    rhs: BlochRhs,
    opts: &'o BlochOptions,
    h: f64,
    steps: usize,
}

impl<'o> Dopri5<'o> {
    fn new(rhs: BlochRhs, opts: &'o BlochOptions, h0: f64) -> Self {
        Dopri5 {
            rhs,
            opts,
            h: h0,
            steps: 0,
        }
    }

    fn advance(&mut self, t: &mut f64, y: &mut [f64; 3], t_end: f64) -> Result<()> {
        while *t < t_end {
            let remaining = t_end - *t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };
            if h <= 1e-14 * t.abs().max(1e-300) && !last {
                return Err(Error::StepSizeFailure { time: *t });
            }
            self.steps += 1;
            if self.steps > self.opts.max_steps {
                return Err(Error::StepSizeFailure { time: *t });
            }

            let (y_new, err) = self.try_step(*t, y, h);
            if !err.is_finite() {
                return Err(Error::StepSizeFailure { time: *t });
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                *t = if last { t_end } else { *t + h };
                *y = y_new;
                check_state(&to_state(y), *t, self.opts.invariant_tol)?;
                // A forced short final step should not shrink the next one.
                if !last {
                    self.h = h * factor;
                } else {
                    self.h = self.h.max(h * factor);
                }
            } else {
                self.h = h * factor.min(1.0);
                if self.h < 1e-14 * t.abs().max(1e-300) {
                    return Err(Error::StepSizeFailure { time: *t });
                }
            }
        }
        Ok(())
    }

    fn try_step(&self, t: f64, y: &[f64; 3], h: f64) -> ([f64; 3], f64) {
        let mut k = [[0.0; 3]; 7];
        for s in 0..7 {
            let mut ys = *y;
            for (j, kj) in k.iter().enumerate().take(s) {
                for i in 0..3 {
                    ys[i] += h * A[s][j] * kj[i];
                }
            }
            k[s] = self.rhs.eval(t + C[s] * h, &ys);
        }
        let mut y5 = *y;
        let mut err = 0.0_f64;
        for i in 0..3 {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..7 {
                d5 += B5[s] * k[s][i];
                d4 += B4[s] * k[s][i];
            }
            y5[i] += h * d5;
            let sc = self.opts.atol + self.opts.rtol * y[i].abs().max(y5[i].abs());
            err = err.max((h * (d5 - d4)).abs() / sc);
        }
        (y5, err)
    }
}
