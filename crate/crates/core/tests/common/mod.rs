//! Test-side oracles, written against the model equations without going
//! through the solver's own propagation code.

#![allow(dead_code)]

use std::path::PathBuf;

use hftmfg::config::ModelConfig;
use hftmfg::mfg::MeanFieldSolution;
use nalgebra::{DMatrix, DVector};

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// `exp(m)` by scaling and squaring of a truncated Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
    let squarings = norm.log2().ceil().max(0.0) as i32 + 1;
    let a = m / 2f64.powi(squarings);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=24 {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Single-state equilibrium `(mu, E)` from the second-order ODE
/// `c E'' + gammaH E' - 2 phi E = 0`, `c = lambdaH + 2 eta`, with
/// `mu(t_k-) - mu(t_k) = gamma xi_k / c` and `c mu(T) + 2 Gamma E(T) = 0`,
/// solved by linear shooting on `mu(0)`.
pub struct ScalarOracle {
    a: DMatrix<f64>,
    /// `(mu, E)` just after each break `0, t_1, ..., t_K`.
    starts: Vec<DVector<f64>>,
    breaks: Vec<f64>,
}

impl ScalarOracle {
    pub fn new(cfg: &ModelConfig, xi: &[f64]) -> Self {
        let m = &cfg.market;
        let c = m.lambda_h + 2.0 * m.eta;
        let (phi, terminal) = (cfg.aversion.phi[0], cfg.aversion.terminal[0]);
        let a = DMatrix::from_row_slice(2, 2, &[-m.gamma_h / c, 2.0 * phi / c, 1.0, 0.0]);
        let mut breaks = vec![0.0];
        breaks.extend_from_slice(&cfg.schedule.times);
        breaks.push(cfg.schedule.horizon);
        let e0 = cfg.population.e0[0];

        let run = |mu0: f64| {
            let mut y = DVector::from_vec(vec![mu0, e0]);
            let mut starts = vec![y.clone()];
            for k in 0..breaks.len() - 1 {
                y = expm(&(&a * (breaks[k + 1] - breaks[k]))) * y;
                if k < xi.len() {
                    y[0] -= m.gamma * xi[k] / c;
                    starts.push(y.clone());
                }
            }
            let residual = c * y[0] + 2.0 * terminal * y[1];
            (starts, residual)
        };
        let (_, r0) = run(0.0);
        let (_, r1) = run(1.0);
        let (starts, _) = run(-r0 / (r1 - r0));
        ScalarOracle { a, starts, breaks }
    }

    /// `(mu, E)` at `t` inside segment `s` (segment 0 starts at 0).
    pub fn at(&self, s: usize, t: f64) -> (f64, f64) {
        let y = expm(&(&self.a * (t - self.breaks[s]))) * &self.starts[s];
        (y[0], y[1])
    }

    /// Sup-norm distance to a solver solution over every grid node.
    pub fn sup_error(&self, mf: &MeanFieldSolution) -> f64 {
        mf.e_agg
            .iter_nodes()
            .zip(mf.mu_agg.iter_nodes())
            .map(|((s, _, t, e), (_, _, _, mu))| {
                let (mu_o, e_o) = self.at(s, t);
                (e[0] - e_o).abs().max((mu[0] - mu_o).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Distribution of the aversion chain, `p(t) = exp(Q^T t) p0`.
pub fn chain_distribution(cfg: &ModelConfig, t: f64) -> Vec<f64> {
    let n = cfg.n_states();
    let qt = DMatrix::from_fn(n, n, |i, j| cfg.aversion.q[j][i]);
    let p0 = DVector::from_column_slice(&cfg.aversion.p0);
    (expm(&(qt * t)) * p0).iter().cloned().collect()
}

/// `C = max_i max(Gamma(i), sqrt(eta phi(i)))`.
pub fn box_bound(cfg: &ModelConfig) -> f64 {
    cfg.aversion
        .terminal
        .iter()
        .zip(&cfg.aversion.phi)
        .map(|(g, f)| g.max((cfg.market.eta * f).sqrt()))
        .fold(0.0, f64::max)
}

/// Max over interior nodes of `|centred dE/dt - mu|` for the aggregate.
pub fn aggregate_residual(mf: &MeanFieldSolution) -> f64 {
    let grid = mf.grid().clone();
    let mut worst: f64 = 0.0;
    for (s, nodes) in grid.segments().enumerate() {
        for j in 1..nodes.len() - 1 {
            let de = (mf.e_agg.node(s, j + 1)[0] - mf.e_agg.node(s, j - 1)[0]) / (nodes[j + 1] - nodes[j - 1]);
            worst = worst.max((de - mf.mu_agg.node(s, j)[0]).abs());
        }
    }
    worst
}

/// Max of `|dE_i/dt - mu_i - sum_{j != i} (p_j Q_ji / p_i)(E_j - E_i)|` with a
/// five-point derivative, `p` from the matrix exponential.
pub fn per_state_residual(cfg: &ModelConfig, mf: &MeanFieldSolution) -> f64 {
    let n = cfg.n_states();
    let q = &cfg.aversion.q;
    let grid = mf.grid().clone();
    let mut worst: f64 = 0.0;
    for (s, nodes) in grid.segments().enumerate() {
        let h = nodes[1] - nodes[0];
        for j in 2..nodes.len() - 2 {
            let p = chain_distribution(cfg, nodes[j]);
            let e = mf.e_by_state.node(s, j);
            let mu = mf.mu_by_state.node(s, j);
            for i in 0..n {
                let f = |d: usize| mf.e_by_state.node(s, d)[i];
                let de = (f(j - 2) - 8.0 * f(j - 1) + 8.0 * f(j + 1) - f(j + 2)) / (12.0 * h);
                let coupling: f64 = (0..n)
                    .filter(|&l| l != i)
                    .map(|l| p[l] * q[l][i] / p[i] * (e[l] - e[i]))
                    .sum();
                worst = worst.max((de - mu[i] - coupling).abs());
            }
        }
    }
    worst
}

/// `max_i |[(2 eta I + lambdaH e p^T) mu(T)]_i + 2 Gamma_i E_i(T)|`.
pub fn terminal_residual(cfg: &ModelConfig, mf: &MeanFieldSolution) -> f64 {
    let m = &cfg.market;
    let p = chain_distribution(cfg, cfg.schedule.horizon);
    let mu = mf.mu_by_state.terminal();
    let e = mf.e_by_state.terminal();
    let weighted: f64 = p.iter().zip(mu).map(|(a, b)| a * b).sum();
    (0..cfg.n_states())
        .map(|i| (2.0 * m.eta * mu[i] + m.lambda_h * weighted + 2.0 * cfg.aversion.terminal[i] * e[i]).abs())
        .fold(0.0, f64::max)
}

/// `max_k |mu(t_k-) - mu(t_k) - gamma xi_k / (lambdaH + 2 eta)|` for the
/// aggregate speed.
pub fn jump_residual(cfg: &ModelConfig, mf: &MeanFieldSolution, xi: &[f64]) -> f64 {
    let m = &cfg.market;
    let c = m.lambda_h + 2.0 * m.eta;
    (1..=xi.len())
        .map(|k| {
            let jump = mf.mu_agg.left_limit_at_trade(k)[0] - mf.mu_agg.value_at_trade(k)[0];
            (jump - m.gamma * xi[k - 1] / c).abs()
        })
        .fold(0.0, f64::max)
}

pub fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Least-squares slope of `log y` on `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}
