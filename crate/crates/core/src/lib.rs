//! Equilibrium engine for a large trader executing against a continuum of
//! high-frequency traders whose inventory aversion follows a Markov chain.

pub mod chain;
pub mod commands;
pub mod config;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod lt;
pub mod mfg;
pub mod ode;
pub mod report;
pub mod riccati;
pub mod sim;

pub use config::{load_config, ModelConfig};
pub use error::{ConfigError, SolveError};
