//! Simulation and averaging toolkit for slow-fast stochastic evolution
//! equations driven by alpha-stable noise, on finite sine-basis truncations.

pub mod averaging;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod noise;
pub mod spectral;
pub mod stats;

pub use config::Config;
pub use error::{Error, Result};
