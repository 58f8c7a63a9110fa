//! Unilateral deviation gains in the finite game.
//!
//! The deviating HFT faces a frozen path `w(t)` for the average speed of the
//! other `M - 1` agents and moves the aggregate by `delta = 1/M` herself.
//! Her objective is then linear-quadratic in inventory with Markov-switching
//! penalties, so both the best response and the value of any affine policy
//! are quadratic in `x`, with coefficients from linear or Riccati ODEs
//! integrated backward on the solver grid.

use crate::config::MarketParams;
use crate::equilibrium::Equilibrium;
use crate::error::SolveError;
use crate::lt::{best_response_to_impact, profit_from_impact};
use crate::ode::Workspace;

use super::population::SimOutcome;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationResult {
    pub j_mfg: f64,
    pub j_best: f64,
    pub gain: f64,
}

/// Setting faced by a deviating HFT.
#[derive(Debug, Clone)]
pub struct DeviationProblem<'a> {
    pub eq: &'a Equilibrium,
    /// Own weight in the aggregate speed.
    pub delta: f64,
    /// Average speed of the others at every flattened node; linear in
    /// between.
    pub others_speed: Vec<f64>,
    pub x0: f64,
    pub y0: usize,
    /// Adds a constant to the equilibrium policy on one grid cell,
    /// `(segment, cell, amount)`.
    pub bump: Option<(usize, usize, f64)>,
}

impl<'a> DeviationProblem<'a> {
    /// The infinite-population limit: others trade at `mu`, no own impact.
    pub fn mean_field_limit(eq: &'a Equilibrium, x0: f64, y0: usize) -> Self {
        DeviationProblem {
            eq,
            delta: 0.0,
            others_speed: eq.mean_field.mu_agg.iter_nodes().map(|(_, _, _, v)| v[0]).collect(),
            x0,
            y0,
            bump: None,
        }
    }

    /// The deviator (agent 0) of a simulated population.
    pub fn from_simulation(eq: &'a Equilibrium, sim: &SimOutcome) -> Self {
        let m = sim.settings.agents.max(1);
        DeviationProblem {
            eq,
            delta: 1.0 / m as f64,
            others_speed: sim.others_speed.clone(),
            x0: sim.deviator_initial.0,
            y0: sim.deviator_initial.1,
            bump: None,
        }
    }

    /// Expected payoff of the best response and of the equilibrium policy.
    pub fn solve(&self) -> Result<DeviationResult, SolveError> {
        let (best, mfg) = self.integrate()?;
        let (x, i) = (self.x0, self.y0);
        let p0 = self.eq.cfg.market.p0;
        let value = |c: &[f64]| p0 * x + c[i] + c[self.n() + i] * x + c[2 * self.n() + i] * x * x;
        let (j_best, j_mfg) = (value(&best), value(&mfg));
        Ok(DeviationResult {
            j_mfg,
            j_best,
            gain: j_best - j_mfg,
        })
    }

    fn n(&self) -> usize {
        self.eq.cfg.n_states()
    }

    /// Backward integration of `(w0, w1, w2)` for the best response and
    /// `(r0, r1, r2)` for the equilibrium policy; returns both at `t = 0`.
    fn integrate(&self) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
        let eq = self.eq;
        let n = self.n();
        let MarketParams {
            gamma,
            gamma_h,
            lambda_h,
            eta,
            ..
        } = eq.cfg.market;
        let delta = self.delta;
        let eta_d = eta + lambda_h * delta;
        let q = &eq.cfg.aversion.q;
        let phi = &eq.cfg.aversion.phi;
        let grid = eq.mean_field.grid().clone();
        let integrator = eq.cfg.solver.integrator;

        // state = [w0, w1, w2, r0, r1, r2], each of length n
        let mut state = vec![0.0; 6 * n];
        for i in 0..n {
            state[2 * n + i] = -eq.cfg.aversion.terminal[i];
            state[5 * n + i] = -eq.cfg.aversion.terminal[i];
        }
        let mut work = Workspace::default();
        let mut h = vec![0.0; n];
        let mut mu = vec![0.0; n];
        let mut e = vec![0.0; n];
        let offsets: Vec<usize> = grid
            .segments()
            .scan(0, |acc, s| {
                let o = *acc;
                *acc += s.len();
                Some(o)
            })
            .collect();

        for s in (0..grid.n_segments()).rev() {
            if s + 1 < grid.n_segments() {
                let jump = gamma * eq.xi[s];
                for i in 0..n {
                    state[n + i] += jump;
                    state[4 * n + i] += jump;
                }
            }
            let nodes = grid.segment(s);
            for j in (0..nodes.len() - 1).rev() {
                let (t0, t1) = (nodes[j], nodes[j + 1]);
                let (w0, w1) = (self.others_speed[offsets[s] + j], self.others_speed[offsets[s] + j + 1]);
                let bump = match self.bump {
                    Some((bs, bj, amount)) if bs == s && bj == j => amount,
                    _ => 0.0,
                };
                integrator.step(t1, t0 - t1, &mut state, &mut work, |t, y, dy| {
                    let frac = (t - t0) / (t1 - t0);
                    let omega = w0 + (w1 - w0) * frac;
                    eq.propagator.h2.eval_in_segment(s, t, &mut h);
                    eq.mean_field.mu_by_state.eval_in_segment(s, t, &mut mu);
                    eq.mean_field.e_by_state.eval_in_segment(s, t, &mut e);
                    let couple = |block: usize, i: usize| -> f64 {
                        (0..n).map(|l| q[i][l] * y[block * n + l]).sum()
                    };
                    for i in 0..n {
                        let (c1, c2) = (y[n + i], y[2 * n + i]);
                        let a = c1 - lambda_h * (1.0 - delta) * omega;
                        let b = 2.0 * c2 + gamma_h * delta;
                        dy[2 * n + i] = phi[i] - b * b / (4.0 * eta_d) - couple(2, i);
                        dy[n + i] = -gamma_h * (1.0 - delta) * omega - a * b / (2.0 * eta_d) - couple(1, i);
                        dy[i] = -a * a / (4.0 * eta_d) - couple(0, i);

                        let beta = h[i] / eta;
                        let alpha = mu[i] - beta * e[i] + bump;
                        let (r1, r2) = (y[4 * n + i], y[5 * n + i]);
                        dy[5 * n + i] = -(2.0 * r2 * beta + gamma_h * delta * beta - eta_d * beta * beta - phi[i])
                            - couple(5, i);
                        dy[4 * n + i] = -(r1 * beta + 2.0 * r2 * alpha + gamma_h * delta * alpha
                            - lambda_h * (1.0 - delta) * omega * beta
                            - 2.0 * eta_d * alpha * beta
                            + gamma_h * (1.0 - delta) * omega)
                            - couple(4, i);
                        dy[3 * n + i] = -(r1 * alpha - lambda_h * (1.0 - delta) * omega * alpha - eta_d * alpha * alpha)
                            - couple(3, i);
                    }
                });
                if state.iter().any(|v| !v.is_finite()) {
                    return Err(SolveError::NotConcave(format!(
                        "deviation value coefficients diverged near t = {t0}"
                    )));
                }
            }
        }
        Ok((state[..3 * n].to_vec(), state[3 * n..].to_vec()))
    }
}

/// HFT deviation gain for agent 0 of a simulated population.
pub fn deviation_gain(eq: &Equilibrium, sim: &SimOutcome) -> Result<DeviationResult, SolveError> {
    DeviationProblem::from_simulation(eq, sim).solve()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtDeviationResult {
    /// LT objective at the equilibrium schedule on the simulated paths.
    pub psi_star: f64,
    /// LT objective at its best schedule against the same paths.
    pub psi_best: f64,
    pub gain: f64,
}

/// HFT cost terms at the trade dates from simulated `Xbar` and `vbar`.
pub fn simulated_impact(eq: &Equilibrium, sim: &SimOutcome) -> Vec<f64> {
    use crate::config::LimitSide;
    let grid = eq.mean_field.grid();
    let market = &eq.cfg.market;
    let mut offsets = Vec::with_capacity(grid.n_segments());
    let mut acc = 0;
    for seg in grid.segments() {
        offsets.push(acc);
        acc += seg.len();
    }
    (1..grid.n_segments())
        .map(|k| {
            let right = offsets[k];
            let speed_node = match eq.cfg.conventions.lt_speed_limit {
                LimitSide::Right => right,
                LimitSide::Left => right - 1,
            };
            market.gamma_h * (sim.xbar[right] - sim.xbar[0]) + market.lambda_h * sim.vbar[speed_node]
        })
        .collect()
}

/// LT gain from re-optimising its schedule against the simulated HFT flow.
pub fn lt_deviation_gain(eq: &Equilibrium, sim: &SimOutcome) -> LtDeviationResult {
    let g = simulated_impact(eq, sim);
    let market = &eq.cfg.market;
    let best = best_response_to_impact(&g, eq.xi0, market);
    let psi = |xi: &[f64]| profit_from_impact(market, xi, eq.xi0, market.p0, &g).profit_with_hft;
    let (psi_star, psi_best) = (psi(&eq.xi), psi(&best));
    LtDeviationResult {
        psi_star,
        psi_best,
        gain: psi_best - psi_star,
    }
}
