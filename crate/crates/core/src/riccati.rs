//! Backward Riccati system for the quadratic value-function coefficients
//! `h_i(t, x) = h0_i(t) + h1_i(t) x + h2_i(t) x^2` and the HFT feedback law.

use std::sync::{Arc, OnceLock};

use crate::config::{AversionSpec, MarketParams};
use crate::error::SolveError;
use crate::grid::{PiecewiseCurve, TimeGrid};
use crate::mfg::MeanFieldSolution;
use crate::ode::{Integrator, Workspace};

/// Slack allowed below `-C` before the box check aborts.
pub const BOX_SLACK: f64 = 1e-8;
/// Largest h1 jump mismatch tolerated when recovering h1.
pub const JUMP_TOL: f64 = 1e-6;

/// `C = max_i max(Gamma(i), sqrt(eta phi(i)))`; every `h2_i` stays in `[-C, 0]`.
pub fn box_bound(aversion: &AversionSpec, market: &MarketParams) -> f64 {
    aversion
        .terminal
        .iter()
        .zip(&aversion.phi)
        .map(|(&g, &f)| g.max((market.eta * f).sqrt()))
        .fold(0.0, f64::max)
}

fn h2_rhs(aversion: &AversionSpec, eta: f64) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
    move |_, h, dh| {
        let n = h.len();
        for i in 0..n {
            let coupling: f64 = (0..n).map(|j| aversion.q[i][j] * h[j]).sum();
            dh[i] = -h[i] * h[i] / eta + aversion.phi[i] - coupling;
        }
    }
}

/// Integrates `dh2_i/dt = -(h2_i)^2/eta + phi(i) - sum_j Q^{ij} h2_j` backward
/// from `h2_i(T) = -Gamma(i)`, continuously through every trade date.
pub fn solve_h2(
    aversion: &AversionSpec,
    market: &MarketParams,
    grid: &Arc<TimeGrid>,
    integrator: Integrator,
) -> Result<PiecewiseCurve, SolveError> {
    let n = aversion.n_states();
    let rhs = h2_rhs(aversion, market.eta);
    let lower = -box_bound(aversion, market) - BOX_SLACK;

    let mut values: Vec<Vec<f64>> = vec![Vec::new(); grid.n_segments()];
    let mut state: Vec<f64> = aversion.terminal.iter().map(|g| -g).collect();
    let mut work = Workspace::default();
    for s in (0..grid.n_segments()).rev() {
        let nodes = grid.segment(s);
        let mut seg = vec![0.0; nodes.len() * n];
        let last = nodes.len() - 1;
        seg[last * n..].copy_from_slice(&state);
        for j in (0..last).rev() {
            integrator.step(nodes[j + 1], nodes[j] - nodes[j + 1], &mut state, &mut work, &rhs);
            for (i, &h) in state.iter().enumerate() {
                if !(h >= lower && h <= BOX_SLACK) {
                    return Err(SolveError::RiccatiBox {
                        time: nodes[j],
                        state: i,
                        value: h,
                        lower: lower + BOX_SLACK,
                    });
                }
            }
            seg[j * n..(j + 1) * n].copy_from_slice(&state);
        }
        values[s] = seg;
    }
    Ok(PiecewiseCurve::from_nodes(grid.clone(), n, |s, j, t, v, d| {
        v.copy_from_slice(&values[s][j * n..(j + 1) * n]);
        rhs(t, v, d);
    }))
}

/// Recovers `h1_i = 2 eta mu_i - 2 h2_i E_i + lambdaH mu` from the mean field
/// and checks the jump `h1_i(t_k-) - h1_i(t_k) = gamma xi_k`.
pub fn recover_h1(
    mf: &MeanFieldSolution,
    h2: &PiecewiseCurve,
    market: &MarketParams,
    xi: &[f64],
) -> Result<PiecewiseCurve, SolveError> {
    let n = h2.dim();
    let (eta, lh) = (market.eta, market.lambda_h);
    let h1 = PiecewiseCurve::from_nodes(h2.grid().clone(), n, |s, j, _, v, d| {
        let (mu, dmu) = (mf.mu_by_state.node(s, j), mf.mu_by_state.node_slope(s, j));
        let (e, de) = (mf.e_by_state.node(s, j), mf.e_by_state.node_slope(s, j));
        let (h, dh) = (h2.node(s, j), h2.node_slope(s, j));
        let (m, dm) = (mf.mu_agg.node(s, j)[0], mf.mu_agg.node_slope(s, j)[0]);
        for i in 0..n {
            v[i] = 2.0 * eta * mu[i] - 2.0 * h[i] * e[i] + lh * m;
            d[i] = 2.0 * eta * dmu[i] - 2.0 * (dh[i] * e[i] + h[i] * de[i]) + lh * dm;
        }
    });
    for (k, &x) in xi.iter().enumerate() {
        let expected = market.gamma * x;
        let (left, right) = (h1.left_limit_at_trade(k + 1), h1.value_at_trade(k + 1));
        for i in 0..n {
            let observed = left[i] - right[i];
            if (observed - expected).abs() > JUMP_TOL {
                return Err(SolveError::JumpMismatch {
                    k: k + 1,
                    observed,
                    expected,
                });
            }
        }
    }
    Ok(h1)
}

/// Backward integration of the linear h1 equation driven by the aggregate
/// speed, with `h1(T) = 0` and `h1(t_k-) = h1(t_k) + gamma xi_k`. Used to
/// cross-check [`recover_h1`].
pub fn integrate_h1_backward(
    h2: &PiecewiseCurve,
    mu_agg: &PiecewiseCurve,
    aversion: &AversionSpec,
    market: &MarketParams,
    xi: &[f64],
    integrator: Integrator,
) -> PiecewiseCurve {
    let n = aversion.n_states();
    let grid = h2.grid().clone();
    let (eta, lh, gh) = (market.eta, market.lambda_h, market.gamma_h);
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); grid.n_segments()];
    let mut state = vec![0.0; n];
    let mut work = Workspace::default();
    let mut hbuf = vec![0.0; n];
    let mut mbuf = [0.0];
    let rhs_at = |s: usize, t: f64, y: &[f64], dy: &mut [f64], hb: &mut [f64], mb: &mut [f64]| {
        h2.eval_in_segment(s, t, hb);
        mu_agg.eval_in_segment(s, t, mb);
        for i in 0..n {
            let coupling: f64 = (0..n).map(|j| aversion.q[i][j] * y[j]).sum();
            dy[i] = -hb[i] * (y[i] - lh * mb[0]) / eta - gh * mb[0] - coupling;
        }
    };
    for s in (0..grid.n_segments()).rev() {
        if s < grid.n_segments() - 1 {
            for v in state.iter_mut() {
                *v += market.gamma * xi[s];
            }
        }
        let nodes = grid.segment(s);
        let last = nodes.len() - 1;
        let mut seg = vec![0.0; nodes.len() * n];
        seg[last * n..].copy_from_slice(&state);
        for j in (0..last).rev() {
            integrator.step(
                nodes[j + 1],
                nodes[j] - nodes[j + 1],
                &mut state,
                &mut work,
                |t, y, dy| rhs_at(s, t, y, dy, &mut hbuf, &mut mbuf),
            );
            seg[j * n..(j + 1) * n].copy_from_slice(&state);
        }
        values[s] = seg;
    }
    let mut hb = vec![0.0; n];
    let mut mb = [0.0];
    PiecewiseCurve::from_nodes(grid, n, |s, j, t, v, d| {
        v.copy_from_slice(&values[s][j * n..(j + 1) * n]);
        rhs_at(s, t, v, d, &mut hb, &mut mb);
    })
}

/// Backward quadrature of `dh0_i/dt = -(h1_i - lambdaH mu)^2/(4 eta) -
/// sum_j Q^{ij} h0_j` with `h0(T) = 0`, continuous at every trade date.
pub fn compute_h0(
    h1: &PiecewiseCurve,
    mu_agg: &PiecewiseCurve,
    aversion: &AversionSpec,
    market: &MarketParams,
    integrator: Integrator,
) -> PiecewiseCurve {
    let n = aversion.n_states();
    let grid = h1.grid().clone();
    let (eta, lh) = (market.eta, market.lambda_h);
    let rhs_at = |s: usize, t: f64, y: &[f64], dy: &mut [f64], hb: &mut [f64], mb: &mut [f64]| {
        h1.eval_in_segment(s, t, hb);
        mu_agg.eval_in_segment(s, t, mb);
        for i in 0..n {
            let coupling: f64 = (0..n).map(|j| aversion.q[i][j] * y[j]).sum();
            let drive = hb[i] - lh * mb[0];
            dy[i] = -drive * drive / (4.0 * eta) - coupling;
        }
    };
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); grid.n_segments()];
    let mut state = vec![0.0; n];
    let mut work = Workspace::default();
    let mut hb = vec![0.0; n];
    let mut mb = [0.0];
    for s in (0..grid.n_segments()).rev() {
        let nodes = grid.segment(s);
        let last = nodes.len() - 1;
        let mut seg = vec![0.0; nodes.len() * n];
        seg[last * n..].copy_from_slice(&state);
        for j in (0..last).rev() {
            integrator.step(nodes[j + 1], nodes[j] - nodes[j + 1], &mut state, &mut work, |t, y, dy| {
                rhs_at(s, t, y, dy, &mut hb, &mut mb)
            });
            seg[j * n..(j + 1) * n].copy_from_slice(&state);
        }
        values[s] = seg;
    }
    PiecewiseCurve::from_nodes(grid, n, |s, j, t, v, d| {
        v.copy_from_slice(&values[s][j * n..(j + 1) * n]);
        rhs_at(s, t, v, d, &mut hb, &mut mb);
    })
}

/// Value-function coefficients of the HFT problem given a mean field.
#[derive(Debug)]
pub struct RiccatiSolution {
    pub h2: PiecewiseCurve,
    pub h1: PiecewiseCurve,
    h0: OnceLock<PiecewiseCurve>,
    aversion: AversionSpec,
    market: MarketParams,
    integrator: Integrator,
}

impl RiccatiSolution {
    pub fn new(
        h2: PiecewiseCurve,
        h1: PiecewiseCurve,
        aversion: AversionSpec,
        market: MarketParams,
        integrator: Integrator,
    ) -> Self {
        RiccatiSolution {
            h2,
            h1,
            h0: OnceLock::new(),
            aversion,
            market,
            integrator,
        }
    }

    /// `h0`, computed on first use.
    pub fn h0(&self, mu_agg: &PiecewiseCurve) -> &PiecewiseCurve {
        self.h0.get_or_init(|| {
            compute_h0(&self.h1, mu_agg, &self.aversion, &self.market, self.integrator)
        })
    }

    /// Diagonal entries of `Phi(t) = diag(phi(i) - sum_j Q^{ij} h2_j(t))`.
    pub fn phi_diag(&self, t: f64) -> Vec<f64> {
        let h = self.h2.eval(t);
        let n = h.len();
        (0..n)
            .map(|i| {
                self.aversion.phi[i] - (0..n).map(|j| self.aversion.q[i][j] * h[j]).sum::<f64>()
            })
            .collect()
    }

    /// `(1/(2 eta)) [h1_i(t) + 2 h2_i(t) x - lambdaH mu(t)]`, right-continuous in t.
    pub fn feedback_control(&self, t: f64, x: f64, i: usize, mu_agg: &PiecewiseCurve) -> f64 {
        let (h1, h2, mu) = (self.h1.eval(t)[i], self.h2.eval(t)[i], mu_agg.eval(t)[0]);
        (h1 + 2.0 * h2 * x - self.market.lambda_h * mu) / (2.0 * self.market.eta)
    }

    /// Same control written around the state mean: `mu_i + (h2_i/eta)(x - E_i)`.
    pub fn feedback_control_deviation_form(&self, t: f64, x: f64, i: usize, mf: &MeanFieldSolution) -> f64 {
        let (mu_i, e_i) = (mf.mu_by_state.eval(t)[i], mf.e_by_state.eval(t)[i]);
        mu_i + self.h2.eval(t)[i] / self.market.eta * (x - e_i)
    }

    /// `P x + h0_i(t) + h1_i(t) x + h2_i(t) x^2`.
    pub fn value_function(&self, t: f64, x: f64, price: f64, i: usize, mu_agg: &PiecewiseCurve) -> f64 {
        let h0 = self.h0(mu_agg).eval(t)[i];
        price * x + h0 + self.h1.eval(t)[i] * x + self.h2.eval(t)[i] * x * x
    }
}
