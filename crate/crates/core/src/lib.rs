//! Numerical laboratory for the entropy method applied to weighted fast diffusion
//! equations: radial flows, entropy functionals, linearized spectra and
//! symmetry-breaking thresholds.

pub mod acceptance;
pub mod cli;
pub mod config;
pub mod discretization;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod params;
pub mod profiles;
pub mod quadrature;
pub mod region;
pub mod spectral;

pub use error::{Error, Result};
