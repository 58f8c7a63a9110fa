//! Named invariant checks over built-in or user configs, reported as JSON.

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::build_p_q;
use crate::config::presets::{overall, overall_n1, partial, partial_n1};
use crate::config::{AversionSpec, Mode, ModelConfig};
use crate::equilibrium::Equilibrium;
use crate::grid::PiecewiseCurve;
use crate::lt::FIXED_POINT_TOL;
use crate::mfg::{closed_form_n1, MeanFieldSolution};
use crate::riccati::box_bound;

pub const ROW_SUM_TOL: f64 = 1e-12;
pub const ORACLE_TOL: f64 = 1e-6;
pub const JUMP_TOL: f64 = 1e-6;
pub const TERMINAL_TOL: f64 = 1e-6;
pub const AGGREGATE_TOL: f64 = 1e-4;
pub const PER_STATE_TOL: f64 = 1e-6;
pub const LINEARITY_TOL: f64 = 1e-8;
pub const BOX_SLACK_LOW: f64 = 1e-8;
pub const BOX_SLACK_HIGH: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Observed magnitude (residual, error, eigenvalue...).
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: String, value: f64, tolerance: f64) -> Self {
        Check {
            passed: value <= tolerance,
            detail: format!("{value:.3e} (tolerance {tolerance:.1e})"),
            name,
            value,
            tolerance,
        }
    }

    fn failed(name: String, detail: String) -> Self {
        Check {
            name,
            passed: false,
            value: f64::NAN,
            tolerance: 0.0,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn new(checks: Vec<Check>) -> Self {
        ValidationReport {
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> String {
        // NaN is not valid JSON; serde_json writes it as null.
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Configs exercised by a plain `validate` run.
pub fn builtin_configs() -> Vec<(String, ModelConfig)> {
    let mut out = Vec::new();
    for gamma in [0.0, 0.1, 2.0] {
        for phi in [0.0, 5.0, 10.0] {
            out.push((format!("partial_n1_G{gamma}_phi{phi}"), partial_n1(gamma, phi)));
        }
    }
    for (x, y) in [(0.0, 0.0), (0.2, 0.8), (0.5, 0.5), (0.8, 0.2)] {
        out.push((
            format!("partial_2s_x{x}_y{y}"),
            partial(AversionSpec::two_state([0.0, 2.0], [0.0, 10.0], x, y)),
        ));
    }
    out.push(("overall_n1_G0_phi0".into(), overall_n1(0.0, 0.0)));
    out.push(("overall_n1_G2_phi0".into(), overall_n1(2.0, 0.0)));
    out.push((
        "overall_2s_x0.5_y0.5".into(),
        overall(AversionSpec::two_state([2.0, 0.0], [0.0, 10.0], 0.5, 0.5)),
    ));
    out
}

/// Runs every check on every config, in parallel across configs.
pub fn validate_configs(configs: &[(String, ModelConfig)]) -> ValidationReport {
    let checks: Vec<Vec<Check>> = configs.par_iter().map(|(name, cfg)| config_suite(name, cfg)).collect();
    ValidationReport::new(checks.into_iter().flatten().collect())
}

fn config_suite(name: &str, cfg: &ModelConfig) -> Vec<Check> {
    let mut out = structural_checks(name, cfg);
    let structural_ok = out.iter().all(|c| c.passed);
    let valid = cfg.validate();
    out.push(match &valid {
        Ok(()) => Check::at_most(format!("{name}/config_valid"), 0.0, 0.0),
        Err(e) => Check::failed(format!("{name}/config_valid"), e.to_string()),
    });
    if !structural_ok || valid.is_err() {
        return out;
    }
    let eq = match Equilibrium::solve(cfg) {
        Ok(eq) => eq,
        Err(e) => {
            out.push(Check::failed(format!("{name}/solve"), e.to_string()));
            return out;
        }
    };
    out.extend(solution_checks(name, cfg, &eq));
    out
}

/// Generator and initial-distribution invariants, checked directly on the
/// raw config so a broken file is reported by name.
fn structural_checks(name: &str, cfg: &ModelConfig) -> Vec<Check> {
    let a = &cfg.aversion;
    let n = a.p0.len();
    let square = a.q.len() == n && a.q.iter().all(|r| r.len() == n);
    if !square {
        return vec![Check::failed(
            format!("{name}/q_shape"),
            format!("Q must be {n}x{n} to match p0"),
        )];
    }
    let row_sum = a
        .q
        .iter()
        .map(|r| r.iter().sum::<f64>().abs())
        .fold(0.0, f64::max);
    let neg_offdiag = a
        .q
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().enumerate().filter(move |(j, _)| *j != i).map(|(_, v)| -v))
        .fold(0.0, f64::max);
    let p_neg = a.p0.iter().map(|v| -v).fold(0.0, f64::max);
    let p_sum = (a.p0.iter().sum::<f64>() - 1.0).abs();
    vec![
        Check::at_most(format!("{name}/q_row_sums"), row_sum, ROW_SUM_TOL),
        Check::at_most(format!("{name}/q_offdiag_nonnegative"), neg_offdiag, 0.0),
        Check::at_most(format!("{name}/p0_distribution"), p_neg.max(p_sum), 1e-12),
    ]
}

fn solution_checks(name: &str, cfg: &ModelConfig, eq: &Equilibrium) -> Vec<Check> {
    let mf = &eq.mean_field;
    let mut out = Vec::new();

    let p_min = eq
        .propagator
        .chain
        .p
        .iter_nodes()
        .flat_map(|(_, _, _, v)| v.iter().cloned())
        .fold(f64::INFINITY, f64::min);
    out.push(Check {
        name: format!("{name}/probability_positive"),
        passed: p_min > 0.0,
        value: p_min,
        tolerance: 0.0,
        detail: format!("min p_i(t) = {p_min:.3e}"),
    });

    let bound = box_bound(&cfg.aversion, &cfg.market);
    let (h_min, h_max) = eq
        .riccati
        .h2
        .iter_nodes()
        .flat_map(|(_, _, _, v)| v.iter().cloned())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let breach = (-bound - BOX_SLACK_LOW - h_min).max(h_max - BOX_SLACK_HIGH).max(0.0);
    out.push(Check {
        name: format!("{name}/riccati_box"),
        passed: breach == 0.0,
        value: breach,
        tolerance: 0.0,
        detail: format!("h2 in [{h_min:.6}, {h_max:.3e}], box [-{bound}, 0]"),
    });

    out.push(Check::at_most(format!("{name}/jump_conditions"), mf.residuals.worst_jump(), JUMP_TOL));
    let continuity = mf
        .residuals
        .jumps
        .iter()
        .map(|j| j.continuity_residual)
        .fold(0.0, f64::max);
    out.push(Check::at_most(format!("{name}/inventory_continuity"), continuity, JUMP_TOL));
    out.push(Check::at_most(format!("{name}/terminal_condition"), mf.residuals.terminal, TERMINAL_TOL));
    let initial = mf
        .e_by_state
        .initial()
        .iter()
        .zip(&cfg.population.e0)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    out.push(Check::at_most(format!("{name}/initial_condition"), initial, 0.0));
    out.push(Check::at_most(
        format!("{name}/aggregate_identity"),
        aggregate_identity_residual(mf),
        AGGREGATE_TOL,
    ));
    out.push(Check::at_most(
        format!("{name}/per_state_dynamics"),
        per_state_residual(eq),
        PER_STATE_TOL,
    ));
    out.push(Check::at_most(format!("{name}/linearity"), linearity_residual(eq), LINEARITY_TOL));

    if cfg.n_states() == 1 {
        let check = match closed_form_n1(cfg, &eq.xi, mf.grid().clone()) {
            Ok(oracle) => {
                let err = oracle.e_agg.sup_distance(&mf.e_agg).max(oracle.mu_agg.sup_distance(&mf.mu_agg));
                Check::at_most(format!("{name}/oracle_equivalence"), err, ORACLE_TOL)
            }
            Err(e) => Check::failed(format!("{name}/oracle_equivalence"), e.to_string()),
        };
        out.push(check);
    }

    if let (Mode::Overall, Some(ov)) = (cfg.mode, &eq.overall) {
        out.push(Check::at_most(
            format!("{name}/lt_first_order"),
            ov.first_order_residual,
            FIXED_POINT_TOL,
        ));
        let max_eig = ov.concavity.nash_eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.push(Check {
            name: format!("{name}/lt_concavity"),
            passed: ov.concavity.negative_definite,
            value: max_eig,
            tolerance: 0.0,
            detail: format!("largest Hessian eigenvalue {max_eig:.4e}"),
        });
    }
    out
}

/// Max over interior nodes of `|d/dt E_agg - mu_agg|`, centred differences.
pub fn aggregate_identity_residual(mf: &MeanFieldSolution) -> f64 {
    let grid = mf.grid().clone();
    let mut worst: f64 = 0.0;
    for (s, nodes) in grid.segments().enumerate() {
        for j in 1..nodes.len().saturating_sub(1) {
            let de = (mf.e_agg.node(s, j + 1)[0] - mf.e_agg.node(s, j - 1)[0]) / (nodes[j + 1] - nodes[j - 1]);
            worst = worst.max((de - mf.mu_agg.node(s, j)[0]).abs());
        }
    }
    worst
}

/// Max of `|dE_i/dt - mu_i - (p_Q E)_i|` with a five-point derivative at
/// nodes two or more steps from either end of a segment.
pub fn per_state_residual(eq: &Equilibrium) -> f64 {
    let mf = &eq.mean_field;
    let chain = &eq.propagator.chain;
    let q = eq.cfg.aversion.q_matrix();
    let n = mf.n_states();
    let grid = mf.grid().clone();
    let mut worst: f64 = 0.0;
    for (s, nodes) in grid.segments().enumerate() {
        if nodes.len() < 5 {
            continue;
        }
        let h = nodes[1] - nodes[0];
        for j in 2..nodes.len() - 2 {
            let p_q = build_p_q(chain.p.node(s, j), &q);
            let e = mf.e_by_state.node(s, j);
            let mu = mf.mu_by_state.node(s, j);
            for i in 0..n {
                let f = |d: usize| mf.e_by_state.node(s, d)[i];
                let de = (f(j - 2) - 8.0 * f(j - 1) + 8.0 * f(j + 1) - f(j + 2)) / (12.0 * h);
                let coupling: f64 = (0..n).map(|l| p_q[(i, l)] * e[l]).sum();
                worst = worst.max((de - mu[i] - coupling).abs());
            }
        }
    }
    worst
}

/// Superposition error of the mean field over the unit `E_0` and `xi`
/// directions against one fixed nontrivial instance.
pub fn linearity_residual(eq: &Equilibrium) -> f64 {
    let n = eq.cfg.n_states();
    let k = eq.xi.len();
    let e0: Vec<f64> = (0..n).map(|i| 0.3 - 0.7 * i as f64).collect();
    let xi: Vec<f64> = (0..k).map(|j| ((j as f64) * 1.3).sin() + 0.5).collect();
    let prop = &eq.propagator;
    let full = prop.solve(&e0, &xi);
    let mut parts: Vec<MeanFieldSolution> = Vec::with_capacity(n + k);
    let mut weights = Vec::with_capacity(n + k);
    for i in 0..n {
        let mut unit = vec![0.0; n];
        unit[i] = 1.0;
        parts.push(prop.solve(&unit, &vec![0.0; k]));
        weights.push(e0[i]);
    }
    for j in 0..k {
        let mut unit = vec![0.0; k];
        unit[j] = 1.0;
        parts.push(prop.solve(&vec![0.0; n], &unit));
        weights.push(xi[j]);
    }
    let combine = |pick: fn(&MeanFieldSolution) -> &PiecewiseCurve| {
        let curves: Vec<&PiecewiseCurve> = parts.iter().map(pick).collect();
        PiecewiseCurve::linear_combination(&curves, &weights)
    };
    let e = combine(|m| &m.e_by_state).sup_distance(&full.e_by_state);
    let mu = combine(|m| &m.mu_by_state).sup_distance(&full.mu_by_state);
    e.max(mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn injected_row_sum_fault_is_named() {
        let mut cfg = partial(AversionSpec::two_state([0.0, 2.0], [0.0, 10.0], 0.5, 0.5));
        cfg.aversion.q[0][1] += 0.1;
        let report = validate_configs(&[("bad".into(), cfg)]);
        assert!(!report.passed);
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        assert!(names.contains(&"bad/q_row_sums"), "{names:?}");
        assert!(report.to_json().contains("\"bad/q_row_sums\""));
    }

    #[test]
    fn coarse_grid_breaks_oracle_equivalence() {
        let mut cfg = partial_n1(0.0, 10.0);
        cfg.solver.grid_steps_per_unit_time = 100;
        let report = validate_configs(&[("coarse".into(), cfg)]);
        let oracle = report
            .checks
            .iter()
            .find(|c| c.name == "coarse/oracle_equivalence")
            .unwrap();
        assert!(!oracle.passed);
        assert!(oracle.value > ORACLE_TOL && oracle.value.is_finite());
    }

    #[test]
    fn fine_grid_passes() {
        let report = validate_configs(&[("ok".into(), partial_n1(2.0, 0.0))]);
        assert!(report.passed, "{:#?}", report.failures().collect::<Vec<_>>());
    }
}
