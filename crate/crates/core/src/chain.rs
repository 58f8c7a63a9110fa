//! Distribution of the aversion state: Kolmogorov forward equation and the
//! population-composition matrix `p_Q(t)` built from it.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::config::AversionSpec;
use crate::error::SolveError;
use crate::grid::{PiecewiseCurve, TimeGrid};
use crate::ode::{Integrator, Workspace};

/// Smallest admissible state probability.
pub const POSITIVITY_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ChainSolution {
    /// State probabilities; continuous across every trade date.
    pub p: PiecewiseCurve,
    q: DMatrix<f64>,
}

/// Integrates `dp^T/dt = p^T Q` from `p(0) = p0` across the grid.
pub fn solve_chain(
    aversion: &AversionSpec,
    grid: &Arc<TimeGrid>,
    integrator: Integrator,
) -> Result<ChainSolution, SolveError> {
    let n = aversion.n_states();
    let q = aversion.q_matrix();
    let rhs = |_: f64, p: &[f64], dp: &mut [f64]| {
        for i in 0..n {
            dp[i] = (0..n).map(|j| p[j] * q[(j, i)]).sum();
        }
    };

    let mut values: Vec<Vec<f64>> = Vec::with_capacity(grid.n_segments());
    let mut state = aversion.p0.clone();
    let mut work = Workspace::default();
    for nodes in grid.segments() {
        let mut seg = Vec::with_capacity(nodes.len() * n);
        seg.extend_from_slice(&state);
        for w in nodes.windows(2) {
            integrator.step(w[0], w[1] - w[0], &mut state, &mut work, rhs);
            seg.extend_from_slice(&state);
        }
        values.push(seg);
    }

    let p = PiecewiseCurve::from_nodes(grid.clone(), n, |s, j, _, v, d| {
        v.copy_from_slice(&values[s][j * n..(j + 1) * n]);
        rhs(0.0, v, d);
    });
    for (_, _, t, v) in p.iter_nodes() {
        if let Some((state, &value)) = v
            .iter()
            .enumerate()
            .find(|(_, &x)| x <= POSITIVITY_THRESHOLD)
        {
            return Err(SolveError::Positivity { time: t, state, value });
        }
    }
    Ok(ChainSolution { p, q })
}

impl ChainSolution {
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn n_states(&self) -> usize {
        self.q.nrows()
    }

    pub fn p_at(&self, t: f64) -> Vec<f64> {
        self.p.eval(t)
    }

    /// `p_Q(t)`, evaluated from the interpolated distribution.
    pub fn p_q(&self, t: f64) -> DMatrix<f64> {
        build_p_q(&self.p.eval(t), &self.q)
    }
}

/// `diag(1/p) Q^T diag(p) - diag(diag(1/p) Q^T p)`: off-diagonal `(i, j)` is
/// `p_j Q^{ji} / p_i`, and each row sums to zero.
pub fn build_p_q(p: &[f64], q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            if j != i {
                let v = p[j] / p[i] * q[(j, i)];
                m[(i, j)] = v;
                row += v;
            }
        }
        m[(i, i)] = -row;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_p1(x: f64, y: f64, t: f64) -> f64 {
        (y + 0.5 * (x - y) * (-(x + y) * t).exp()) / (x + y)
    }

    fn solve(x: f64, y: f64, steps: usize, integrator: Integrator) -> ChainSolution {
        let aversion = AversionSpec::two_state([0.0, 0.0], [0.0, 0.0], x, y);
        let grid = TimeGrid::shared(1.0, &[0.3, 0.6], steps);
        solve_chain(&aversion, &grid, integrator).unwrap()
    }

    #[test]
    fn symmetric_chain_stays_uniform() {
        let chain = solve(0.5, 0.5, 1000, Integrator::Rk4);
        for (_, _, _, v) in chain.p.iter_nodes() {
            assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_generator_freezes_distribution() {
        let aversion = AversionSpec {
            terminal: vec![0.0; 3],
            phi: vec![0.0; 3],
            q: vec![vec![0.0; 3]; 3],
            p0: vec![0.2, 0.3, 0.5],
        };
        let grid = TimeGrid::shared(1.0, &[0.5], 100);
        let chain = solve_chain(&aversion, &grid, Integrator::Rk4).unwrap();
        assert_eq!(chain.p.terminal(), &[0.2, 0.3, 0.5]);
        assert_eq!(chain.p_q(0.7), DMatrix::zeros(3, 3));
    }

    #[test]
    fn matches_two_state_closed_form() {
        let chain = solve(0.2, 0.8, 1000, Integrator::Rk4);
        let p1 = chain.p.terminal()[0];
        assert!((p1 - 0.689_636).abs() < 1e-6, "{p1}");
        assert!((p1 - (0.8 - 0.3 * (-1.0_f64).exp())).abs() < 1e-12);
        for (_, _, t, v) in chain.p.iter_nodes() {
            assert!((v[0] - two_state_p1(0.2, 0.8, t)).abs() < 1e-12);
            assert!((v[0] + v[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn step_halving_matches_integrator_order() {
        for (integrator, expected) in [(Integrator::Euler, 2.0), (Integrator::Rk4, 16.0)] {
            let err = |steps| {
                let chain = solve(2.0, 3.0, steps, integrator);
                chain
                    .p
                    .iter_nodes()
                    .map(|(_, _, t, v)| (v[0] - two_state_p1(2.0, 3.0, t)).abs())
                    .fold(0.0, f64::max)
            };
            let ratio = err(100) / err(200);
            assert!((ratio / expected - 1.0).abs() < 0.15, "{integrator:?}: {ratio}");
        }
    }

    #[test]
    fn p_q_examples() {
        let one = build_p_q(&[1.0], &DMatrix::zeros(1, 1));
        assert_eq!(one, DMatrix::zeros(1, 1));
        let x = 0.7;
        let q = DMatrix::from_row_slice(2, 2, &[-x, x, x, -x]);
        assert_eq!(build_p_q(&[0.5, 0.5], &q), q.transpose());
        assert_eq!(build_p_q(&[0.5, 0.5], &q), q);

        let q3 = DMatrix::from_row_slice(3, 3, &[-1.0, 0.4, 0.6, 0.2, -0.5, 0.3, 0.0, 2.0, -2.0]);
        let m = build_p_q(&[0.2, 0.5, 0.3], &q3);
        for i in 0..3 {
            assert!(m.row(i).sum().abs() < 1e-12);
        }
        assert!((m[(0, 1)] - 0.5 / 0.2 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn positivity_failure_reports_time() {
        let aversion = AversionSpec {
            terminal: vec![0.0; 2],
            phi: vec![0.0; 2],
            q: vec![vec![-1.0, 1.0], vec![0.0, 0.0]],
            p0: vec![0.0, 1.0],
        };
        let grid = TimeGrid::shared(1.0, &[], 100);
        let err = solve_chain(&aversion, &grid, Integrator::Rk4).unwrap_err();
        assert!(matches!(err, SolveError::Positivity { state: 0, time, .. } if time == 0.0));
    }
}
