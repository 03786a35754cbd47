use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::types::EmitterParams;

/// `|q|` below this fraction of `gamma + gamma_perp` is treated as critical damping.
pub const CRITICAL_DAMPING_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingRegime {
    Oscillatory,
    CriticallyDamped,
    Overdamped,
}

/// Eigen-rates of the driven population dynamics.
///
/// `lambda_± = -(gamma + gamma_perp)/2 ± q` with
/// `q = i sqrt(omega^2 - ((gamma - gamma_perp)/2)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPair {
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
    pub q: Complex64,
    pub regime: DampingRegime,
}

impl LambdaPair {
    /// Decay rate of the oscillation envelope, `(gamma + gamma_perp)/2`.
    pub fn envelope_rate(&self) -> f64 {
        -0.5 * (self.lambda_plus.re + self.lambda_minus.re)
    }

    /// Angular frequency of the population oscillation; zero unless oscillatory.
    pub fn oscillation_frequency(&self) -> f64 {
        match self.regime {
            DampingRegime::Oscillatory => self.q.im.abs(),
            _ => 0.0,
        }
    }
}

/// Damping structure with the generalised Rabi frequency `sqrt(omega^2 + delta^2)`.
pub fn lambda_pair(params: &EmitterParams) -> LambdaPair {
    lambda_pair_for(params.gamma(), params.gamma_perp(), params.effective_omega())
}

pub(crate) fn lambda_pair_for(gamma: f64, gamma_perp: f64, omega: f64) -> LambdaPair {
    let a = 0.5 * (gamma + gamma_perp);
    let d = discriminant(gamma, gamma_perp, omega);
    let root = d.abs().sqrt();
    // q = i sqrt(d): imaginary for d > 0, and i * (i sqrt|d|) = -sqrt|d| otherwise.
    let q = if d >= 0.0 {
        Complex64::new(0.0, root)
    } else {
        Complex64::new(-root, 0.0)
    };
    let regime = if root < CRITICAL_DAMPING_RTOL * (gamma + gamma_perp) {
        DampingRegime::CriticallyDamped
    } else if d > 0.0 {
        DampingRegime::Oscillatory
    } else {
        DampingRegime::Overdamped
    };
    LambdaPair {
        lambda_plus: Complex64::new(-a, 0.0) + q,
        lambda_minus: Complex64::new(-a, 0.0) - q,
        q,
        regime,
    }
}

// omega^2 - h^2 factored to keep precision near critical damping.
fn discriminant(gamma: f64, gamma_perp: f64, omega: f64) -> f64 {
    let h = 0.5 * (gamma - gamma_perp).abs();
    (omega - h) * (omega + h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Eval {
    pub value: f64,
    /// True when `|q|` fell under the critical threshold and the
    /// `1 - (1 + a|tau|) exp(-a|tau|)` limit was substituted.
    pub critical_limit: bool,
}

/// Resonant second-order correlation at delay `tau` (s), evaluated with the
/// drive `params.omega()`; detuning is ignored (see [`g2_detuned`]).
pub fn g2_resonant(params: &EmitterParams, tau: f64) -> f64 {
    g2_resonant_eval(params, tau).value
}

pub fn g2_resonant_eval(params: &EmitterParams, tau: f64) -> G2Eval {
    g2_for(params.gamma(), params.gamma_perp(), params.omega(), tau)
}

/// Fixed-detuning correlation: the resonant law with `omega -> sqrt(omega^2 + delta^2)`.
pub fn g2_detuned(params: &EmitterParams, tau: f64) -> f64 {
    g2_for(params.gamma(), params.gamma_perp(), params.effective_omega(), tau).value
}

/// Real closed form of
/// `1 + lambda_-/(2q) e^{|tau| lambda_+} - lambda_+/(2q) e^{|tau| lambda_-}`.
///
/// Written as `1 - e^{-a t} [cos(b t) + a sin(b t)/b]` (and its hyperbolic
/// continuation) so that no `1/q` cancellation occurs; `tau = 0` gives
/// exactly zero.
pub(crate) fn g2_for(gamma: f64, gamma_perp: f64, omega: f64, tau: f64) -> G2Eval {
    let t = tau.abs();
    let a = 0.5 * (gamma + gamma_perp);
    let d = discriminant(gamma, gamma_perp, omega);
    let root = d.abs().sqrt();

    if root < CRITICAL_DAMPING_RTOL * (gamma + gamma_perp) {
        let value = 1.0 - (1.0 + a * t) * (-a * t).exp();
        return G2Eval {
            value,
            critical_limit: true,
        };
    }

    let bracket = if d > 0.0 {
        let phase = root * t;
        (-a * t).exp() * (phase.cos() + a * phase.sin() / root)
    } else {
        let x = root * t;
        if x < 20.0 {
            (-a * t).exp() * (x.cosh() + a * x.sinh() / root)
        } else {
            // root < a, so both exponents are negative.
            let slow = ((root - a) * t).exp();
            let fast = (-(root + a) * t).exp();
            0.5 * (slow + fast) + a * 0.5 * (slow - fast) / root
        }
    };
    G2Eval {
        value: 1.0 - bracket,
        critical_limit: false,
    }
}

/// Literal complex-arithmetic evaluation of the resonant correlation law.
///
/// Kept alongside the real closed form so that both routes can be compared;
/// the imaginary part is pure round-off. Singular at critical damping.
pub fn g2_resonant_complex(params: &EmitterParams, tau: f64) -> Complex64 {
    let lp = lambda_pair_for(params.gamma(), params.gamma_perp(), params.omega());
    let t = tau.abs();
    let two_q = 2.0 * lp.q;
    Complex64::new(1.0, 0.0) + lp.lambda_minus / two_q * (lp.lambda_plus * t).exp()
        - lp.lambda_plus / two_q * (lp.lambda_minus * t).exp()
}

/// Delays of the first maximum and the following minimum of the resonant
/// correlation, `pi / beta` and `2 pi / beta`. `None` unless oscillatory.
pub fn first_peak_and_dip(params: &EmitterParams) -> Option<(f64, f64)> {
    let lp = lambda_pair_for(params.gamma(), params.gamma_perp(), params.omega());
    match lp.regime {
        DampingRegime::Oscillatory => {
            let beta = lp.q.im;
            Some((std::f64::consts::PI / beta, std::f64::consts::TAU / beta))
        }
        _ => None,
    }
}

/// Steady-state excited-state population
/// `(1/2) (omega^2 gamma_perp / gamma) / (delta^2 + gamma_perp^2 + omega^2 gamma_perp / gamma)`.
pub fn emission_rate(params: &EmitterParams) -> f64 {
    emission_rate_for(params.gamma(), params.gamma_perp(), params.omega(), params.delta())
}

pub(crate) fn emission_rate_for(gamma: f64, gamma_perp: f64, omega: f64, delta: f64) -> f64 {
    let s = omega * omega * gamma_perp / gamma;
    if s == 0.0 {
        return 0.0;
    }
    0.5 * s / (delta * delta + gamma_perp * gamma_perp + s)
}
