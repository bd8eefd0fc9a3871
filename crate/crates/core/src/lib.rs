//! Mixed-precision training of multilayer perceptrons on simulated
//! resistive-memory crossbars.
//!
//! Weighted sums run "in memory" on crossbar layers built from stochastic
//! device models, while weight updates accumulate in a high-precision
//! per-synapse buffer and reach the devices only as whole programming
//! pulses.

pub mod crossbar;
pub mod dataio;
pub mod devices;
pub mod error;
pub mod experiment;
pub mod numerics;
pub mod presets;
pub mod trainer;

pub use error::{Error, Result};
