//! Finite-population Monte Carlo: convergence to the mean field,
//! deviation gains and LT revenue paths.

pub mod deviation;
pub mod population;
pub mod price;
pub mod rng;

pub use deviation::{deviation_gain, lt_deviation_gain, DeviationProblem, DeviationResult, LtDeviationResult};
pub use population::{simulate_population, ConvergenceMetrics, SimOutcome, SimSettings};
pub use price::{sample_price_paths, LtPathOutcome};
