//! Monte Carlo of the LT's realised revenue under Brownian price noise.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::config::ModelConfig;
use crate::lt::profit_from_impact;

use super::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct LtPathOutcome {
    pub revenues: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
    /// Expected revenue for the same HFT flow.
    pub analytic: f64,
}

/// Samples `replications` price paths. The HFT flow enters through its cost
/// terms `g_k = gammaH (Xbar(t_k) - Xbar(0)) + lambdaH vbar(t_k)`; the noise
/// adds `sum_k (-xi_k) sigma W(t_k)` to the expected revenue.
pub fn sample_price_paths(
    cfg: &ModelConfig,
    xi: &[f64],
    impact: &[f64],
    replications: usize,
    seed: u64,
) -> LtPathOutcome {
    let market = &cfg.market;
    let analytic = profit_from_impact(market, xi, cfg.xi0_or_implied(xi), market.p0, impact).profit_with_hft;
    let times = &cfg.schedule.times;
    let revenues: Vec<f64> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r, 0);
            let mut w = 0.0;
            let mut last = 0.0;
            let mut noise = 0.0;
            for (&t, &x) in times.iter().zip(xi) {
                let z: f64 = StandardNormal.sample(&mut rng);
                w += (t - last).sqrt() * z;
                last = t;
                noise += -x * market.sigma * w;
            }
            analytic + noise
        })
        .collect();
    let n = revenues.len().max(1) as f64;
    let mean = revenues.iter().sum::<f64>() / n;
    let var = if revenues.len() > 1 {
        revenues.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    LtPathOutcome {
        revenues,
        mean,
        std_error: (var / n).sqrt(),
        analytic,
    }
}
