//! Emitter dynamics: closed-form g2 and time-domain Bloch integration.

mod bloch;
mod g2;

pub use bloch::{evolve_pulse, evolve_pulse_from, BlochOptions, BlochState, PulseEnvelope, PulseShape};
pub use g2::{
    emission_rate, first_peak_and_dip, g2_detuned, g2_resonant, g2_resonant_complex, g2_resonant_eval,
    lambda_pair, DampingRegime, G2Eval, LambdaPair, CRITICAL_DAMPING_RTOL,
};
pub(crate) use g2::{emission_rate_for, g2_for};
