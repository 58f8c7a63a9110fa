//! Large-trader side: best response to a mean field, the overall Nash
//! equilibrium through the affine dependence of the mean field on
//! `(E_0, xi)`, expected profits and the second-order check.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::{LimitSide, MarketParams, Mode, ModelConfig};
use crate::error::SolveError;
use crate::mfg::{MeanFieldSolution, Propagator};

/// Condition number above which the best-response system is rejected.
pub const MAX_BEST_RESPONSE_CONDITION: f64 = 1e12;
/// Tolerated `|BR(mean_field(xi*)) - xi*|`.
pub const FIXED_POINT_TOL: f64 = 1e-6;

/// `gamma + 2 (lambda + eta0)`.
pub fn curvature(market: &MarketParams) -> f64 {
    market.gamma + 2.0 * (market.lambda + market.eta0)
}

/// Speed read at trade `k` (1-based) under the configured limit convention.
fn speed_at_trade(mf: &MeanFieldSolution, k: usize, side: LimitSide) -> f64 {
    match side {
        LimitSide::Right => mf.mu_agg.value_at_trade(k)[0],
        LimitSide::Left => mf.mu_agg.left_limit_at_trade(k)[0],
    }
}

/// HFT cost term at each trade: `gammaH (E(t_k) - E(0)) + lambdaH mu(t_k)`.
pub fn hft_impact_at_trades(mf: &MeanFieldSolution, market: &MarketParams, side: LimitSide) -> Vec<f64> {
    let e0 = mf.e_agg.initial()[0];
    (1..=mf.grid().trade_times().len())
        .map(|k| {
            market.gamma_h * (mf.e_agg.value_at_trade(k)[0] - e0) + market.lambda_h * speed_at_trade(mf, k, side)
        })
        .collect()
}

/// Maximiser of the LT objective for fixed HFT cost terms `g` subject to
/// `sum(xi) = -xi0`.
pub fn best_response_to_impact(g: &[f64], xi0: f64, market: &MarketParams) -> Vec<f64> {
    let k = g.len();
    if k == 0 {
        return Vec::new();
    }
    let d = curvature(market);
    let mean = g.iter().sum::<f64>() / k as f64;
    let mut xi: Vec<f64> = g[..k - 1].iter().map(|gk| -xi0 / k as f64 + (mean - gk) / d).collect();
    let partial: f64 = xi.iter().sum();
    xi.push(-xi0 - partial);
    xi
}

/// LT best response to a mean field.
pub fn lt_best_response(mf: &MeanFieldSolution, cfg: &ModelConfig, xi0: f64) -> Vec<f64> {
    let g = hft_impact_at_trades(mf, &cfg.market, cfg.conventions.lt_speed_limit);
    best_response_to_impact(&g, xi0, &cfg.market)
}

/// Eigenvalues of the LT objective's Hessian in the free variables
/// `xi_1..xi_{K-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityReport {
    /// Mean field held fixed (the best-response problem).
    pub nash_eigenvalues: Vec<f64>,
    /// Mean field responding to `xi` through the linear map.
    pub full_response_eigenvalues: Vec<f64>,
    /// `true` when every eigenvalue of the best-response Hessian is negative.
    pub negative_definite: bool,
    pub full_response_negative_definite: bool,
}

fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// `S = [I; -1^T]` mapping free variables to the full schedule.
fn elimination(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k - 1, |r, c| if r == c { 1.0 } else if r == k - 1 { -1.0 } else { 0.0 })
}

/// Hessians from the sensitivity `G = d g / d xi` of the HFT cost terms.
pub fn concavity_check(market: &MarketParams, sensitivity: &DMatrix<f64>) -> ConcavityReport {
    let k = sensitivity.nrows();
    if k <= 1 {
        return ConcavityReport {
            nash_eigenvalues: Vec::new(),
            full_response_eigenvalues: Vec::new(),
            negative_definite: true,
            full_response_negative_definite: true,
        };
    }
    let s = elimination(k);
    let nash = -(s.transpose() * &s) * curvature(market);
    let full = &nash - s.transpose() * (sensitivity + sensitivity.transpose()) * &s;
    let nash_eigenvalues = sorted_eigenvalues(nash);
    let full_response_eigenvalues = sorted_eigenvalues(full);
    ConcavityReport {
        negative_definite: nash_eigenvalues.iter().all(|&e| e < 0.0),
        full_response_negative_definite: full_response_eigenvalues.iter().all(|&e| e < 0.0),
        nash_eigenvalues,
        full_response_eigenvalues,
    }
}

#[derive(Debug)]
pub struct OverallEquilibrium {
    pub xi_star: Vec<f64>,
    pub xi0: f64,
    pub mean_field: MeanFieldSolution,
    pub propagator: Arc<Propagator>,
    /// Solutions for `(e_i, 0)`, one per aversion state.
    pub basis_e0: Vec<MeanFieldSolution>,
    /// Solutions for `(0, e_k)`, one per trade date.
    pub basis_xi: Vec<MeanFieldSolution>,
    /// Aggregate `E(t_k)` and `mu(t_k)` driven by `E_0` alone.
    pub c_e: Vec<f64>,
    pub c_mu: Vec<f64>,
    /// `d g / d xi` for the HFT cost terms at the trade dates.
    pub sensitivity: DMatrix<f64>,
    /// Residual of the first-order system in the free variables.
    pub first_order_residual: f64,
    pub fixed_point_residual: f64,
    pub condition_number: f64,
    pub concavity: ConcavityReport,
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Overall equilibrium for an overall-mode config, building its own propagator.
pub fn solve_overall(cfg: &ModelConfig) -> Result<OverallEquilibrium, SolveError> {
    let prop = Arc::new(Propagator::new(cfg)?);
    solve_overall_with(cfg, prop)
}

/// Overall equilibrium reusing an existing propagator.
pub fn solve_overall_with(cfg: &ModelConfig, prop: Arc<Propagator>) -> Result<OverallEquilibrium, SolveError> {
    if cfg.mode != Mode::Overall {
        return Err(SolveError::Mode("overall solve needs mode = overall".into()));
    }
    let xi0 = cfg
        .schedule
        .xi0
        .ok_or_else(|| SolveError::Mode("overall solve needs schedule.xi0".into()))?;
    let (n, k) = (cfg.n_states(), cfg.schedule.n_trades());
    let side = cfg.conventions.lt_speed_limit;
    let market = &cfg.market;
    let zeros_xi = vec![0.0; k];
    let zeros_e = vec![0.0; n];

    let basis_e0: Vec<MeanFieldSolution> = (0..n)
        .into_par_iter()
        .map(|i| prop.solve(&unit(n, i), &zeros_xi))
        .collect();
    let basis_xi: Vec<MeanFieldSolution> = (0..k)
        .into_par_iter()
        .map(|j| prop.solve(&zeros_e, &unit(k, j)))
        .collect();

    let at_trades = |weights: &[f64], sols: &[MeanFieldSolution], f: &dyn Fn(&MeanFieldSolution, usize) -> f64| {
        (1..=k)
            .map(|t| weights.iter().zip(sols).map(|(w, s)| w * f(s, t)).sum::<f64>())
            .collect::<Vec<f64>>()
    };
    let e0 = &cfg.population.e0;
    let c_e = at_trades(e0, &basis_e0, &|s, t| s.e_agg.value_at_trade(t)[0]);
    let c_mu = at_trades(e0, &basis_e0, &|s, t| speed_at_trade(s, t, side));
    let e_start: f64 = e0.iter().zip(&basis_e0).map(|(w, s)| w * s.e_agg.initial()[0]).sum();
    let g_const: Vec<f64> = c_e
        .iter()
        .zip(&c_mu)
        .map(|(e, m)| market.gamma_h * (e - e_start) + market.lambda_h * m)
        .collect();
    let sensitivity = DMatrix::from_fn(k, k, |r, c| hft_impact_at_trades(&basis_xi[c], market, side)[r]);

    let (xi_star, condition_number, first_order_residual) = if k == 0 {
        (Vec::new(), 1.0, 0.0)
    } else if k == 1 {
        (vec![-xi0], 1.0, 0.0)
    } else {
        let d = curvature(market);
        let kf = k as f64;
        let r = DMatrix::from_fn(k - 1, k, |i, j| 1.0 / kf - if i == j { 1.0 } else { 0.0 });
        let s = elimination(k);
        let mut shift = DVector::zeros(k);
        shift[k - 1] = -xi0;
        let lhs = DMatrix::identity(k - 1, k - 1) - (&r * &sensitivity * &s) / d;
        let g_c = DVector::from_column_slice(&g_const);
        let rhs = DVector::from_element(k - 1, -xi0 / kf) + (&r * (&g_c + &sensitivity * &shift)) / d;
        let sv = lhs.clone().svd(false, false).singular_values;
        let cond = sv.max() / sv.min();
        log::info!("best-response system condition number {cond:.3e}");
        if !(cond <= MAX_BEST_RESPONSE_CONDITION) {
            return Err(SolveError::SingularBestResponse { condition: cond });
        }
        let free = lhs.clone().lu().solve(&rhs).ok_or(SolveError::SingularBestResponse { condition: cond })?;
        let residual = (&lhs * &free - &rhs).amax();
        let mut xi: Vec<f64> = free.iter().cloned().collect();
        let partial: f64 = xi.iter().sum();
        xi.push(-xi0 - partial);
        (xi, cond, residual)
    };

    let mean_field = prop.solve(e0, &xi_star);
    let response = lt_best_response(&mean_field, cfg, xi0);
    let fixed_point_residual = response
        .iter()
        .zip(&xi_star)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if fixed_point_residual > FIXED_POINT_TOL {
        log::warn!("overall fixed-point residual {fixed_point_residual:.3e} > {FIXED_POINT_TOL:e}");
    }
    let concavity = concavity_check(market, &sensitivity);
    if !concavity.negative_definite {
        log::warn!("LT Hessian is not negative definite; xi* is a stationary point only");
    }
    Ok(OverallEquilibrium {
        xi_star,
        xi0,
        mean_field,
        propagator: prop,
        basis_e0,
        basis_xi,
        c_e,
        c_mu,
        sensitivity,
        first_order_residual,
        fixed_point_residual,
        condition_number,
        concavity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitReport {
    pub profit_no_hft: f64,
    pub profit_with_hft: f64,
    pub difference: f64,
}

/// `P0 xi0 - gamma sum_k xi_k sum_{j<=k} xi_j - (lambda + eta0) sum_k xi_k^2`.
pub fn profit_without_hft(market: &MarketParams, xi: &[f64], xi0: f64, p0: f64) -> f64 {
    let mut cumulative = 0.0;
    let mut impact = 0.0;
    for &x in xi {
        cumulative += x;
        impact += x * cumulative;
    }
    let squares: f64 = xi.iter().map(|x| x * x).sum();
    p0 * xi0 - market.gamma * impact - (market.lambda + market.eta0) * squares
}

/// Profit report from HFT cost terms `g_k` at the trade dates.
pub fn profit_from_impact(market: &MarketParams, xi: &[f64], xi0: f64, p0: f64, g: &[f64]) -> ProfitReport {
    let profit_no_hft = profit_without_hft(market, xi, xi0, p0);
    let difference: f64 = xi.iter().zip(g).map(|(x, gk)| -x * gk).sum();
    ProfitReport {
        profit_no_hft,
        profit_with_hft: profit_no_hft + difference,
        difference,
    }
}

/// Expected LT profit with and without HFTs. In partial mode without an
/// explicit `xi0`, the position is `-sum(xi)`.
pub fn lt_profit(cfg: &ModelConfig, xi: &[f64], mf: &MeanFieldSolution, p0: f64) -> ProfitReport {
    let g = hft_impact_at_trades(mf, &cfg.market, cfg.conventions.lt_speed_limit);
    profit_from_impact(&cfg.market, xi, cfg.xi0_or_implied(xi), p0, &g)
}
