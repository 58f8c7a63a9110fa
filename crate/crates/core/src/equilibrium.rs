//! A solved equilibrium in either mode, with everything downstream
//! consumers need: the mean field, the Riccati coefficients and the LT
//! schedule it was solved for.

use std::sync::Arc;

use crate::config::{Mode, ModelConfig};
use crate::error::SolveError;
use crate::lt::{lt_profit, solve_overall_with, OverallEquilibrium, ProfitReport};
use crate::mfg::{MeanFieldSolution, Propagator};
use crate::riccati::{recover_h1, RiccatiSolution};

#[derive(Debug)]
pub struct Equilibrium {
    pub cfg: ModelConfig,
    pub propagator: Arc<Propagator>,
    pub mean_field: MeanFieldSolution,
    pub riccati: RiccatiSolution,
    pub xi: Vec<f64>,
    pub xi0: f64,
    /// Present in overall mode.
    pub overall: Option<OverallEquilibrium>,
}

impl Equilibrium {
    /// Solves according to `cfg.mode`. In overall mode, user-fixed
    /// quantities are ignored in favour of the LT best response.
    pub fn solve(cfg: &ModelConfig) -> Result<Self, SolveError> {
        let propagator = Arc::new(Propagator::new(cfg)?);
        let (mean_field, xi, overall) = match cfg.mode {
            Mode::Partial => {
                let xi = cfg
                    .quantities()
                    .ok_or_else(|| SolveError::Mode("partial solve needs schedule.quantities".into()))?
                    .to_vec();
                (propagator.solve(&cfg.population.e0, &xi), xi, None)
            }
            Mode::Overall => {
                let overall = solve_overall_with(cfg, propagator.clone())?;
                (overall.mean_field.clone(), overall.xi_star.clone(), Some(overall))
            }
        };
        let h2 = propagator.h2.clone();
        let h1 = recover_h1(&mean_field, &h2, &cfg.market, &xi)?;
        let riccati = RiccatiSolution::new(h2, h1, cfg.aversion.clone(), cfg.market.clone(), cfg.solver.integrator);
        Ok(Equilibrium {
            xi0: cfg.xi0_or_implied(&xi),
            cfg: cfg.clone(),
            propagator,
            mean_field,
            riccati,
            xi,
            overall,
        })
    }

    pub fn profit(&self) -> ProfitReport {
        lt_profit(&self.cfg, &self.xi, &self.mean_field, self.cfg.market.p0)
    }
}
