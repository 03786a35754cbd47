//! Stochastic oracle: quantum-jump photon streams, coincidence histograms and
//! sampled diffusion averages.

mod correlate;
mod jump;
mod process;
mod quasi_static;
mod stream;

pub use correlate::{accidental_level, correlate};
pub use process::{DiffusionKind, DiffusionProcess};
pub use quasi_static::{quasi_static_average, QuasiStaticEstimate, MIN_QUASI_STATIC_SAMPLES};
pub use stream::{
    simulate_stream, simulate_stream_with, trajectory_populations, PhotonStream, PopulationEstimate,
    StreamOptions,
};
