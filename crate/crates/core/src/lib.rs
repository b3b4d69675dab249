//! Quantum-noise-limited displacement/force sensing with a detuned
//! Fabry-Perot cavity whose end mirror is a mechanical oscillator.
//!
//! The crate covers the steady state of the cavity, the optical spring and its
//! stability, the quasi-static and full finite-bandwidth noise spectra, the
//! standard and ultimate quantum limits, and numeric optimization of the
//! working point.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod finite_bandwidth;
pub mod model;
pub mod optimizer;
pub mod params;
pub mod quasistatic;

pub use error::{Error, Result};
pub use finite_bandwidth::{
    dip_analysis, log_grid, spectrum, spectrum_in, DipReport, NoiseSpectrum, Regime,
};
pub use model::{SelfConsistentRoot, StabilityReport, SteadyState};
pub use optimizer::{
    minimize_over_detuning, minimize_over_xi, stability_map, OptimResult, SearchSpec,
};
pub use params::{
    Constants, Detuning, MechanicalOscillator, OpticalCavity, Sensor, UnitMode, WorkingPoint,
};
pub use quasistatic::{InputNoiseModel, SqlPoint};

pub use num_complex::Complex64;
