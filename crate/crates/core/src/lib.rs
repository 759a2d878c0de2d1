//! Simulation of noise-assisted transport between energy bands of a tilted
//! bichromatic optical lattice.
//!
//! The crate has three solver layers and the machinery to drive them:
//!
//! * [`noise`]: harmonic-noise trajectories `(phi, mu)` generated by a
//!   white-noise-driven damped oscillator, plus their statistics.
//! * [`propagator`]: split-operator spectral propagation of the full 1D
//!   wavefunction in the accelerated-frame gauge, with ground-state
//!   preparation and ground-band survival measurement.
//! * [`lz`]: the two-level "noisy Landau-Zener" reduction of the band
//!   crossing, with Monte Carlo ensembles over noise realizations.
//! * [`quasistatic`]: deterministic moving-lattice runs and the Gaussian
//!   average over the stationary velocity distribution.
//! * [`model`]: static lattice parameters, Bloch scales and unit
//!   conversions. [`harness`]: config parsing, parameter sweeps and CSV
//!   output behind the CLI.

pub mod error;
pub mod harness;
pub mod lz;
pub mod model;
pub mod noise;
pub mod propagator;
pub mod quasistatic;
pub mod stats;

pub use error::{Error, Result};
