//! Mean-field equilibrium of the HFT population for a fixed LT schedule.
//!
//! The forward-backward system for `(mu, E)` is linear with time-varying
//! coefficients, and every LT trade drops the speeds by
//! `gamma xi_k / (lambdaH + 2 eta)`. It is decoupled as `mu = K(t) E + k(t)`:
//! `K` solves a matrix Riccati equation backward from the terminal
//! condition, `k` a linear equation backward through the trade kicks, and
//! `E` is then advanced forward from `E_0` with `mu` re-anchored on the
//! decoupling at every node. Plain shooting on `mu(0)` would carry the
//! growing modes of the system and amplify roundoff by `exp(sqrt(phi/eta) T)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::chain::{build_p_q, solve_chain, ChainSolution};
use crate::config::{AversionSpec, MarketParams, ModelConfig};
use crate::error::SolveError;
use crate::grid::{PiecewiseCurve, TimeGrid};
use crate::ode::{Integrator, Workspace};
use crate::riccati::solve_h2;

/// Condition number of the terminal system above which the solve aborts.
pub const MAX_TERMINAL_CONDITION: f64 = 1e12;

/// Generator matrix `A(t)` of the homogeneous system in `(mu, E)`:
///
/// ```text
/// A = [[A1, A2], [I, p_Q]]
/// A1 = -M^{-1} [gammaH e p^T + 2 eta Q + lambdaH e p^T Q]
/// A2 = 2 M^{-1} [H p_Q + Phi + Q H],   M = 2 eta I + lambdaH e p^T
/// ```
///
/// `M^{-1}` uses the rank-one structure with `p^T e = 1`.
pub fn assemble_a(p: &[f64], h2: &[f64], aversion: &AversionSpec, market: &MarketParams) -> DMatrix<f64> {
    let n = p.len();
    let q = aversion.q_matrix();
    let (eta, lh, gh) = (market.eta, market.lambda_h, market.gamma_h);
    let e_pt = DMatrix::from_fn(n, n, |_, j| p[j]);
    let m_inv = (DMatrix::identity(n, n) - &e_pt * (lh / (2.0 * eta + lh))) / (2.0 * eta);

    let b1 = &e_pt * gh + &q * (2.0 * eta) + &e_pt * &q * lh;
    let a1 = -(&m_inv * b1);

    let p_q = build_p_q(p, &q);
    let h = DMatrix::from_diagonal(&DVector::from_column_slice(h2));
    let phi = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            aversion.phi[i] - (0..n).map(|l| q[(i, l)] * h2[l]).sum::<f64>()
        } else {
            0.0
        }
    });
    let b2 = &h * &p_q + phi + &q * &h;
    let a2 = (&m_inv * b2) * 2.0;

    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&a1);
    a.view_mut((0, n), (n, n)).copy_from(&a2);
    a.view_mut((n, 0), (n, n)).fill_with_identity();
    a.view_mut((n, n), (n, n)).copy_from(&p_q);
    a
}

/// Terminal operator `[2 eta I + lambdaH e p^T, 2 Gamma]` acting on `(mu, E)(T)`.
fn terminal_operator(p_t: &[f64], aversion: &AversionSpec, market: &MarketParams) -> DMatrix<f64> {
    let n = p_t.len();
    DMatrix::from_fn(n, 2 * n, |i, j| {
        if j < n {
            market.lambda_h * p_t[j] + if i == j { 2.0 * market.eta } else { 0.0 }
        } else if j - n == i {
            2.0 * aversion.terminal[i]
        } else {
            0.0
        }
    })
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Everything that does not depend on `(E_0, xi)`: the state distribution,
/// `h2`, the one-step transition maps of the linear system, the decoupling
/// field `K` at every node and the backward transition maps of `k`.
#[derive(Debug)]
pub struct Propagator {
    grid: Arc<TimeGrid>,
    aversion: AversionSpec,
    market: MarketParams,
    pub chain: ChainSolution,
    pub h2: PiecewiseCurve,
    steps: Vec<Vec<DMatrix<f64>>>,
    generator: Vec<Vec<DMatrix<f64>>>,
    /// `K` at every node.
    decoupling: Vec<Vec<DMatrix<f64>>>,
    /// Maps `k(t_{j+1})` to `k(t_j)` inside each segment.
    sweep: Vec<Vec<DMatrix<f64>>>,
    terminal_condition: f64,
    tolerance: f64,
}

impl Propagator {
    pub fn new(cfg: &ModelConfig) -> Result<Self, SolveError> {
        let grid = TimeGrid::shared(
            cfg.schedule.horizon,
            &cfg.schedule.times,
            cfg.solver.grid_steps_per_unit_time,
        );
        Self::on_grid(cfg, grid)
    }

    pub fn on_grid(cfg: &ModelConfig, grid: Arc<TimeGrid>) -> Result<Self, SolveError> {
        let integrator = cfg.solver.integrator;
        let aversion = cfg.aversion.clone();
        let market = cfg.market.clone();
        let n = aversion.n_states();
        let chain = solve_chain(&aversion, &grid, integrator)?;
        let h2 = solve_h2(&aversion, &market, &grid, integrator)?;

        let dim = 2 * n;
        let mut pbuf = vec![0.0; n];
        let mut hbuf = vec![0.0; n];
        let mut a_at = |s: usize, t: f64| {
            chain.p.eval_in_segment(s, t, &mut pbuf);
            h2.eval_in_segment(s, t, &mut hbuf);
            assemble_a(&pbuf, &hbuf, &aversion, &market)
        };

        let identity: Vec<f64> = DMatrix::<f64>::identity(dim, dim).as_slice().to_vec();
        let mut steps = Vec::with_capacity(grid.n_segments());
        let mut generator = Vec::with_capacity(grid.n_segments());
        let mut work = Workspace::default();
        for (s, nodes) in grid.segments().enumerate() {
            let mut ps = Vec::with_capacity(nodes.len() - 1);
            let mut gs = Vec::with_capacity(nodes.len());
            gs.push(a_at(s, nodes[0]));
            for w in nodes.windows(2) {
                let mut state = identity.clone();
                integrator.step(w[0], w[1] - w[0], &mut state, &mut work, |t, y, dy| {
                    let a = a_at(s, t);
                    let u = DMatrix::from_column_slice(dim, dim, y);
                    dy.copy_from_slice((a * u).as_slice());
                });
                ps.push(DMatrix::from_column_slice(dim, dim, &state));
                gs.push(a_at(s, w[1]));
            }
            steps.push(ps);
            generator.push(gs);
        }

        // mu(T) = -G1^{-1} G2 E(T)
        let op = terminal_operator(chain.p.terminal(), &aversion, &market);
        let g1 = op.columns(0, n).into_owned();
        let terminal_condition = condition_number(&g1);
        if !(terminal_condition <= MAX_TERMINAL_CONDITION) {
            return Err(SolveError::SingularTerminal {
                condition: terminal_condition,
            });
        }
        let k_terminal = -g1
            .lu()
            .solve(&op.columns(n, n).into_owned())
            .ok_or(SolveError::SingularTerminal {
                condition: terminal_condition,
            })?;

        // Pull the manifold mu = K E + k back through each step map:
        // with M = P^{-1}, K_j = (M11 K + M12)(M21 K + M22)^{-1} and
        // k_j = (M11 - K_j M21) k_{j+1}. Forward steps then stay on it.
        let mut decoupling: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); grid.n_segments()];
        let mut sweep: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); grid.n_segments()];
        let mut k_mat = k_terminal;
        for s in (0..grid.n_segments()).rev() {
            let nodes = grid.segment(s);
            let last = nodes.len() - 1;
            let mut ks = vec![DMatrix::zeros(n, n); nodes.len()];
            let mut rs = vec![DMatrix::zeros(n, n); last];
            ks[last] = k_mat.clone();
            for j in (0..last).rev() {
                let fail = || SolveError::Decoupling { time: nodes[j] };
                let m = steps[s][j].clone().try_inverse().ok_or_else(fail)?;
                let (m11, m12) = (m.view((0, 0), (n, n)), m.view((0, n), (n, n)));
                let (m21, m22) = (m.view((n, 0), (n, n)), m.view((n, n), (n, n)));
                let w_e = m21 * &k_mat + m22;
                let w_mu = m11 * &k_mat + m12;
                let w_e_inv = w_e.try_inverse().ok_or_else(fail)?;
                k_mat = w_mu * w_e_inv;
                if !k_mat.iter().all(|v| v.is_finite()) {
                    return Err(fail());
                }
                rs[j] = m11 - &k_mat * m21;
                ks[j] = k_mat.clone();
            }
            decoupling[s] = ks;
            sweep[s] = rs;
        }

        Ok(Propagator {
            grid,
            aversion,
            market,
            chain,
            h2,
            steps,
            generator,
            decoupling,
            sweep,
            terminal_condition,
            tolerance: cfg.solver.shooting_tolerance,
        })
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn n_states(&self) -> usize {
        self.aversion.n_states()
    }

    /// Condition number of the speed block of the terminal operator.
    pub fn terminal_condition(&self) -> f64 {
        self.terminal_condition
    }

    /// Transition map of the integrator from node `j` to `j + 1` of segment `s`.
    pub fn step_map(&self, s: usize, j: usize) -> &DMatrix<f64> {
        &self.steps[s][j]
    }

    /// Generator `A(t)` at node `j` of segment `s`.
    pub fn generator(&self, s: usize, j: usize) -> &DMatrix<f64> {
        &self.generator[s][j]
    }

    /// Decoupling field `K` at node `j` of segment `s`.
    pub fn decoupling(&self, s: usize, j: usize) -> &DMatrix<f64> {
        &self.decoupling[s][j]
    }

    /// Solves for the equilibrium with initial state means `e0` and LT
    /// quantities `xi` (one per trade date).
    pub fn solve(&self, e0: &[f64], xi: &[f64]) -> MeanFieldSolution {
        let n = self.n_states();
        let segments = self.grid.n_segments();
        assert_eq!(e0.len(), n, "E0 has wrong length");
        assert_eq!(xi.len() + 1, segments, "one quantity per trade date");
        let dim = 2 * n;
        let denom = self.market.jump_denominator();
        let betas: Vec<f64> = xi.iter().map(|x| self.market.gamma * x / denom).collect();

        // Backward sweep for k; at t_k the left limit adds the kick.
        let mut offsets: Vec<Vec<DVector<f64>>> = vec![Vec::new(); segments];
        let mut k_vec = DVector::<f64>::zeros(n);
        for s in (0..segments).rev() {
            if s + 1 < segments {
                k_vec.add_scalar_mut(betas[s]);
            }
            let len = self.grid.segment(s).len();
            let mut ks = vec![DVector::zeros(n); len];
            ks[len - 1] = k_vec.clone();
            for j in (0..len - 1).rev() {
                k_vec = &self.sweep[s][j] * &k_vec;
                ks[j] = k_vec.clone();
            }
            offsets[s] = ks;
        }

        let anchor = |s: usize, j: usize, y: &mut DVector<f64>| {
            let e = y.rows(n, n).into_owned();
            let mu = &self.decoupling[s][j] * e + &offsets[s][j];
            y.rows_mut(0, n).copy_from(&mu);
        };
        let mut y = DVector::zeros(dim);
        y.rows_mut(n, n).copy_from_slice(e0);
        anchor(0, 0, &mut y);
        let c0 = y.as_slice().to_vec();

        let mut states: Vec<Vec<f64>> = Vec::with_capacity(segments);
        let mut slopes: Vec<Vec<f64>> = Vec::with_capacity(segments);
        for (s, nodes) in self.grid.segments().enumerate() {
            let mut vs = Vec::with_capacity(nodes.len() * dim);
            let mut ds = Vec::with_capacity(nodes.len() * dim);
            for j in 0..nodes.len() {
                if j > 0 {
                    y = &self.steps[s][j - 1] * &y;
                }
                anchor(s, j, &mut y);
                let dy = &self.generator[s][j] * &y;
                vs.extend_from_slice(y.as_slice());
                ds.extend_from_slice(dy.as_slice());
            }
            states.push(vs);
            slopes.push(ds);
        }
        let sol = MeanFieldSolution::from_state_nodes(
            self.grid.clone(),
            &self.chain,
            n,
            &states,
            &slopes,
            xi,
            c0,
        );
        sol.with_residuals(&self.aversion, &self.market, self.chain.p.terminal(), self.tolerance, self.terminal_condition)
    }
}

/// One-sided residual of the speed jump at a trade date.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpResidual {
    pub k: usize,
    pub time: f64,
    pub expected: f64,
    /// `mu(t_k-) - mu(t_k)` for the aggregate.
    pub aggregate_jump: f64,
    pub aggregate_residual: f64,
    /// Largest per-state `|mu_i(t_k-) - mu_i(t_k) - expected|`.
    pub state_residual: f64,
    /// Largest per-state `|E_i(t_k-) - E_i(t_k)|`.
    pub continuity_residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ResidualReport {
    /// `|| [2 eta I + lambdaH e p^T] mu(T) + 2 Gamma E(T) ||_2`.
    pub terminal: f64,
    /// `max_i |E_i(0) - E0_i|`.
    pub initial: f64,
    pub jumps: Vec<JumpResidual>,
    pub terminal_condition_number: f64,
    pub tolerance: f64,
}

impl ResidualReport {
    pub fn worst_jump(&self) -> f64 {
        self.jumps
            .iter()
            .map(|j| j.aggregate_residual.max(j.state_residual))
            .fold(0.0, f64::max)
    }

    pub fn within_tolerance(&self) -> bool {
        self.terminal <= self.tolerance && self.initial <= self.tolerance && self.worst_jump() <= self.tolerance
    }

    /// Human-readable reasons the report breaches its tolerance.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.terminal > self.tolerance {
            out.push(format!("terminal residual {:.3e} > {:.1e}", self.terminal, self.tolerance));
        }
        if self.initial > self.tolerance {
            out.push(format!("initial residual {:.3e} > {:.1e}", self.initial, self.tolerance));
        }
        let worst = self.worst_jump();
        if worst > self.tolerance {
            out.push(format!("jump residual {worst:.3e} > {:.1e}", self.tolerance));
        }
        out
    }
}

/// Equilibrium mean field for one `(E_0, xi)`.
#[derive(Debug, Clone)]
pub struct MeanFieldSolution {
    pub e_by_state: PiecewiseCurve,
    pub mu_by_state: PiecewiseCurve,
    pub e_agg: PiecewiseCurve,
    pub mu_agg: PiecewiseCurve,
    /// Integration constant at `t = 0`, `(mu(0), E(0))`.
    pub c0: Vec<f64>,
    pub xi: Vec<f64>,
    pub residuals: ResidualReport,
}

impl MeanFieldSolution {
    /// Assembles curves from stacked `(mu, E)` node values and slopes.
    fn from_state_nodes(
        grid: Arc<TimeGrid>,
        chain: &ChainSolution,
        n: usize,
        states: &[Vec<f64>],
        slopes: &[Vec<f64>],
        xi: &[f64],
        c0: Vec<f64>,
    ) -> Self {
        let dim = 2 * n;
        let at = |s: usize, j: usize| (&states[s][j * dim..(j + 1) * dim], &slopes[s][j * dim..(j + 1) * dim]);
        let mu_by_state = PiecewiseCurve::from_nodes(grid.clone(), n, |s, j, _, v, d| {
            let (y, dy) = at(s, j);
            v.copy_from_slice(&y[..n]);
            d.copy_from_slice(&dy[..n]);
        });
        let e_by_state = PiecewiseCurve::from_nodes(grid.clone(), n, |s, j, _, v, d| {
            let (y, dy) = at(s, j);
            v.copy_from_slice(&y[n..]);
            d.copy_from_slice(&dy[n..]);
        });
        let weighted = |offset: usize| {
            PiecewiseCurve::from_nodes(grid.clone(), 1, |s, j, _, v, d| {
                let (y, dy) = at(s, j);
                let (p, dp) = (chain.p.node(s, j), chain.p.node_slope(s, j));
                v[0] = (0..n).map(|i| p[i] * y[offset + i]).sum();
                d[0] = (0..n).map(|i| dp[i] * y[offset + i] + p[i] * dy[offset + i]).sum();
            })
        };
        MeanFieldSolution {
            mu_agg: weighted(0),
            e_agg: weighted(n),
            e_by_state,
            mu_by_state,
            c0,
            xi: xi.to_vec(),
            residuals: ResidualReport::default(),
        }
    }

    fn with_residuals(
        mut self,
        aversion: &AversionSpec,
        market: &MarketParams,
        p_t: &[f64],
        tolerance: f64,
        condition: f64,
    ) -> Self {
        let n = aversion.n_states();
        let mut y = self.mu_by_state.terminal().to_vec();
        y.extend_from_slice(self.e_by_state.terminal());
        let r = terminal_operator(p_t, aversion, market) * DVector::from_vec(y);
        let initial = self
            .e_by_state
            .initial()
            .iter()
            .zip(&self.c0[n..])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        self.residuals = ResidualReport {
            terminal: r.norm(),
            initial,
            jumps: jump_conditions_report(&self, market),
            terminal_condition_number: condition,
            tolerance,
        };
        for w in self.residuals.warnings() {
            log::warn!("mean-field residual: {w}");
        }
        self
    }

    pub fn n_states(&self) -> usize {
        self.e_by_state.dim()
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        self.e_agg.grid()
    }
}

/// Jump residuals of the aggregate and per-state speeds at every trade date,
/// against `gamma xi_k / (lambdaH + 2 eta)`.
pub fn jump_conditions_report(sol: &MeanFieldSolution, market: &MarketParams) -> Vec<JumpResidual> {
    let denom = market.jump_denominator();
    let times = sol.grid().trade_times().to_vec();
    sol.xi
        .iter()
        .enumerate()
        .map(|(idx, &x)| {
            let k = idx + 1;
            let expected = market.gamma * x / denom;
            let aggregate_jump = sol.mu_agg.left_limit_at_trade(k)[0] - sol.mu_agg.value_at_trade(k)[0];
            let (ml, mr) = (sol.mu_by_state.left_limit_at_trade(k), sol.mu_by_state.value_at_trade(k));
            let (el, er) = (sol.e_by_state.left_limit_at_trade(k), sol.e_by_state.value_at_trade(k));
            let state_residual = ml
                .iter()
                .zip(mr)
                .map(|(l, r)| (l - r - expected).abs())
                .fold(0.0, f64::max);
            let continuity_residual = el.iter().zip(er).map(|(l, r)| (l - r).abs()).fold(0.0, f64::max);
            JumpResidual {
                k,
                time: times[idx],
                expected,
                aggregate_jump,
                aggregate_residual: (aggregate_jump - expected).abs(),
                state_residual,
                continuity_residual,
            }
        })
        .collect()
}

/// Solves the partial equilibrium for the config's own schedule and `E_0`.
pub fn solve_partial(cfg: &ModelConfig, xi: &[f64]) -> Result<MeanFieldSolution, SolveError> {
    let prop = Propagator::new(cfg)?;
    Ok(prop.solve(&cfg.population.e0, xi))
}

/// Characteristic roots of `(lambdaH + 2 eta) E'' + gammaH E' - 2 phi E = 0`.
pub fn characteristic_roots(market: &MarketParams, phi: f64) -> (f64, f64) {
    let c = market.jump_denominator();
    let disc = (market.gamma_h * market.gamma_h + 8.0 * phi * c).sqrt();
    ((-market.gamma_h + disc) / (2.0 * c), (-market.gamma_h - disc) / (2.0 * c))
}

/// Explicit single-state equilibrium `E(t) = A_k e^{theta1 t} + B_k e^{theta2 t}`
/// on each `[t_k, t_{k+1})`, with `mu = E'`. The repeated-root case (only
/// possible when `gammaH = phi = 0`, so `theta = 0`) uses `E = A_k + B_k t`.
pub fn closed_form_n1(cfg: &ModelConfig, xi: &[f64], grid: Arc<TimeGrid>) -> Result<MeanFieldSolution, SolveError> {
    if cfg.n_states() != 1 {
        return Err(SolveError::Mode(format!(
            "closed form needs one aversion state, config has {}",
            cfg.n_states()
        )));
    }
    let m = &cfg.market;
    let (phi, terminal) = (cfg.aversion.phi[0], cfg.aversion.terminal[0]);
    let e0 = cfg.population.e0[0];
    let horizon = cfg.schedule.horizon;
    let times = grid.trade_times().to_vec();
    assert_eq!(times.len(), xi.len());
    let c = m.jump_denominator();
    let kick: Vec<f64> = xi.iter().map(|x| m.gamma * x / c).collect();

    // Per-segment (A_k, B_k) and the basis exponents.
    let (theta1, theta2) = characteristic_roots(m, phi);
    let repeated = theta1 == theta2;
    let mut coeffs = Vec::with_capacity(times.len() + 1);
    if repeated {
        let sum_kick: f64 = kick.iter().sum();
        let sum_kick_t: f64 = kick.iter().zip(&times).map(|(b, t)| b * t).sum();
        let b0 = (c * sum_kick - 2.0 * terminal * e0 - 2.0 * terminal * sum_kick_t
            + 2.0 * terminal * sum_kick * horizon)
            / (c + 2.0 * terminal * horizon);
        let (mut a, mut b) = (e0, b0);
        coeffs.push((a, b));
        for (kb, t) in kick.iter().zip(&times) {
            a += kb * t;
            b -= kb;
            coeffs.push((a, b));
        }
    } else {
        let scale = 1.0 / (theta2 - theta1) * m.gamma / c;
        let mut x = vec![0.0];
        let mut y = vec![0.0];
        for (k, (&q, &t)) in xi.iter().zip(&times).enumerate() {
            x.push(x[k] + scale * q * (-theta1 * t).exp());
            y.push(y[k] + scale * q * (-theta2 * t).exp());
        }
        let (xk, yk) = (*x.last().unwrap(), *y.last().unwrap());
        let (e1, e2) = ((theta1 * horizon).exp(), (theta2 * horizon).exp());
        let num = -c * (xk * theta1 * e1 + (e0 - yk) * theta2 * e2) - 2.0 * terminal * (xk * e1 + (e0 - yk) * e2);
        let den = c * (theta1 * e1 - theta2 * e2) + 2.0 * terminal * (e1 - e2);
        let a0 = num / den;
        let b0 = e0 - a0;
        for k in 0..=times.len() {
            coeffs.push((a0 + x[k], b0 - y[k]));
        }
    }

    let grid_for_chain = grid.clone();
    let states: Vec<Vec<f64>> = grid
        .segments()
        .enumerate()
        .map(|(s, nodes)| {
            let (a, b) = coeffs[s];
            nodes
                .iter()
                .flat_map(|&t| {
                    if repeated {
                        [b, a + b * t]
                    } else {
                        let (f1, f2) = ((theta1 * t).exp(), (theta2 * t).exp());
                        [theta1 * a * f1 + theta2 * b * f2, a * f1 + b * f2]
                    }
                })
                .collect()
        })
        .collect();
    let slopes: Vec<Vec<f64>> = grid
        .segments()
        .enumerate()
        .map(|(s, nodes)| {
            let (a, b) = coeffs[s];
            nodes
                .iter()
                .flat_map(|&t| {
                    if repeated {
                        [0.0, b]
                    } else {
                        let (f1, f2) = ((theta1 * t).exp(), (theta2 * t).exp());
                        [
                            theta1 * theta1 * a * f1 + theta2 * theta2 * b * f2,
                            theta1 * a * f1 + theta2 * b * f2,
                        ]
                    }
                })
                .collect()
        })
        .collect();
    let chain = solve_chain(&cfg.aversion, &grid_for_chain, Integrator::Rk4)?;
    let (a0, b0) = coeffs[0];
    let mu0 = if repeated { b0 } else { theta1 * a0 + theta2 * b0 };
    let sol = MeanFieldSolution::from_state_nodes(grid, &chain, 1, &states, &slopes, xi, vec![mu0, e0]);
    Ok(sol.with_residuals(&cfg.aversion, m, &[1.0], cfg.solver.shooting_tolerance, f64::NAN))
}
