//! No-jump propagation of the unnormalised density matrix.
//!
//! Only spontaneous emission is unravelled; pure dephasing stays in the
//! deterministic part. With `x = [rho_gg, rho_ee, u, v]` the conditional
//! evolution between emissions is `x' = A x`, and the probability of no
//! emission up to `t` is the trace `rho_gg + rho_ee`.

pub(crate) type Vec4 = [f64; 4];
type Mat4 = [[f64; 4]; 4];

pub(crate) const GROUND: Vec4 = [1.0, 0.0, 0.0, 0.0];

fn mat_vec(m: &Mat4, x: &Vec4) -> Vec4 {
    let mut out = [0.0; 4];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row[0] * x[0] + row[1] * x[1] + row[2] * x[2] + row[3] * x[3];
    }
    out
}

pub(crate) fn survival(x: &Vec4) -> f64 {
    x[0] + x[1]
}

pub(crate) enum Outcome {
    /// Emission at the given absolute time; the emitter is back in the ground state.
    Emission(f64),
    /// Reached the horizon without emitting; holds the unnormalised state there.
    Horizon(Vec4),
}

#[derive(Debug, Clone)]
pub(crate) struct NoJump {
    a: Mat4,
    gamma: f64,
    h: f64,
    step: Mat4,
}

impl NoJump {
    pub(crate) fn new(gamma: f64, gamma_perp: f64, omega: f64, delta: f64) -> Self {
        let a = [
            [0.0, 0.0, 0.0, omega],
            [0.0, -gamma, 0.0, -omega],
            [0.0, 0.0, -gamma_perp, -delta],
            [-0.5 * omega, 0.5 * omega, delta, -gamma_perp],
        ];
        let norm = (0..4)
            .map(|j| (0..4).map(|i| a[i][j].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let h = 0.5 / norm;
        let mut step = [[0.0; 4]; 4];
        for j in 0..4 {
            let mut e = [0.0; 4];
            e[j] = 1.0;
            let col = taylor_apply(&a, &e, h);
            for (i, row) in step.iter_mut().enumerate() {
                row[j] = col[i];
            }
        }
        NoJump { a, gamma, h, step }
    }

    #[cfg(test)]
    pub(crate) fn advance(&self, x: &Vec4, dt: f64) -> Vec4 {
        let mut x = *x;
        let mut left = dt;
        while left >= self.h {
            x = mat_vec(&self.step, &x);
            left -= self.h;
        }
        if left > 0.0 {
            x = taylor_apply(&self.a, &x, left);
        }
        x
    }

    /// Evolves from `(t, x)` until the survival drops to `threshold` or time
    /// reaches `horizon`, whichever comes first.
    pub(crate) fn run(&self, mut t: f64, mut x: Vec4, threshold: f64, horizon: f64) -> Outcome {
        loop {
            let remaining = horizon - t;
            if remaining <= 0.0 {
                return Outcome::Horizon(x);
            }
            let full = remaining > self.h;
            let dt = if full { self.h } else { remaining };
            let next = if full {
                mat_vec(&self.step, &x)
            } else {
                taylor_apply(&self.a, &x, dt)
            };
            if survival(&next) <= threshold {
                return Outcome::Emission(t + self.crossing(&x, threshold, dt));
            }
            x = next;
            if full {
                t += dt;
            } else {
                return Outcome::Horizon(x);
            }
        }
    }

    /// Offset in `(0, dt]` at which the survival from `x` equals `threshold`.
    fn crossing(&self, x: &Vec4, threshold: f64, dt: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, dt);
        let s0 = survival(x) - threshold;
        // Survival is decreasing; start from a linear guess.
        let s1 = survival(&taylor_apply(&self.a, x, dt)) - threshold;
        let mut d = if s0 > s1 { dt * s0 / (s0 - s1) } else { 0.5 * dt };
        for _ in 0..60 {
            let y = taylor_apply(&self.a, x, d);
            let f = survival(&y) - threshold;
            if f > 0.0 {
                lo = d;
            } else {
                hi = d;
            }
            let slope = -self.gamma * y[1];
            let newton = if slope < 0.0 { d - f / slope } else { f64::NAN };
            d = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 4.0 * f64::EPSILON * dt || f.abs() <= 1e-15 * threshold {
                break;
            }
        }
        d.clamp(f64::MIN_POSITIVE, dt)
    }
}

/// `exp(A dt) x` by its Taylor series; accurate when `|A| dt <= 1/2`.
fn taylor_apply(a: &Mat4, x: &Vec4, dt: f64) -> Vec4 {
    let mut sum = *x;
    let mut term = *x;
    for k in 1..40 {
        let next = mat_vec(a, &term);
        let scale = dt / k as f64;
        let mut size = 0.0_f64;
        for i in 0..4 {
            term[i] = next[i] * scale;
            sum[i] += term[i];
            size = size.max(term[i].abs());
        }
        if size <= 1e-18 * sum.iter().fold(0.0_f64, |m, v| m.max(v.abs())) {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_loss_equals_emission_flux() {
        let nj = NoJump::new(1.0, 0.8, 3.0, 0.4);
        let x0 = GROUND;
        let x = nj.advance(&x0, 2.0);
        // d/dt trace = -gamma rho_ee: compare with a fine trapezoid of rho_ee.
        let n = 20_000;
        let h = 2.0 / n as f64;
        let mut integral = 0.0;
        let mut prev = nj.advance(&x0, 0.0)[1];
        let mut y = x0;
        for _ in 0..n {
            y = nj.advance(&y, h);
            integral += 0.5 * h * (prev + y[1]);
            prev = y[1];
        }
        assert!((1.0 - survival(&x) - integral).abs() < 1e-7);
    }

    #[test]
    fn crossing_hits_threshold() {
        let nj = NoJump::new(1.0, 0.5, 2.0, 0.0);
        match nj.run(0.0, GROUND, 0.3, 100.0) {
            Outcome::Emission(t) => {
                let s = survival(&nj.advance(&GROUND, t));
                assert!((s - 0.3).abs() < 1e-12, "survival {s}");
            }
            Outcome::Horizon(_) => panic!("no emission"),
        }
    }

    #[test]
    fn horizon_returns_state() {
        let nj = NoJump::new(1.0, 0.5, 2.0, 0.0);
        match nj.run(0.0, GROUND, 1e-300, 0.05) {
            Outcome::Horizon(x) => {
                let y = nj.advance(&GROUND, 0.05);
                assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-14));
            }
            Outcome::Emission(_) => panic!("unexpected emission"),
        }
    }
}
