//! Spectral design data, LMI-based observer-controller synthesis and
//! Monte-Carlo simulation for stochastic semilinear heat equations on boxes
//! with boundary actuation and boundary sensing on one face.

pub mod bundle;
pub mod config;
pub mod profile;
pub mod psdcheck;
pub mod setup;
pub mod shapes;
pub mod simulator;
pub mod spectral;
pub mod synthesis;
