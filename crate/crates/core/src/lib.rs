pub mod classifier;
pub mod cli;
pub mod diffusion;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod io;
pub mod models;
pub mod montecarlo;
pub mod types;

pub use error::{Error, Result};
