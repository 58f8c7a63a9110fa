//! Built-in parameter sweeps for the twelve figures of the numerical study.
//! Every panel writes one CSV and one SVG drawn from that CSV.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::presets::{overall, overall_n1, partial, partial_n1};
use crate::config::{AversionSpec, ModelConfig};
use crate::equilibrium::Equilibrium;
use crate::error::SolveError;
use crate::lt::solve_overall;
use crate::mfg::solve_partial;
use crate::ode::Integrator;

use super::csv::{equilibrium_table, xi_table, Table};
use super::svg::plot_table;

pub const FIGURE_IDS: [&str; 12] = ["F1", "F2", "F3", "F4", "F5", "F6", "F7", "F8", "F9", "F10", "F11", "F12"];

/// Default `lambdaH` values of the profit-difference scans.
pub fn lambda_h_scan() -> Vec<f64> {
    (1..=50).map(|i| i as f64 / 50.0).collect()
}

#[derive(Debug, Clone)]
pub enum PanelKind {
    /// Mean field `E(t)` of the config's equilibrium.
    Position(ModelConfig),
    /// LT equilibrium schedule (overall mode).
    Strategy(ModelConfig),
    /// LT profit with and without HFTs as `lambdaH` varies.
    LambdaScan { base: ModelConfig, values: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct PanelSpec {
    pub name: String,
    pub kind: PanelKind,
}

#[derive(Debug, Clone)]
pub struct FigureSpec {
    pub id: &'static str,
    pub title: String,
    pub panels: Vec<PanelSpec>,
}

const CHAIN_RATES: [(f64, f64); 4] = [(0.0, 0.0), (0.2, 0.8), (0.5, 0.5), (0.8, 0.2)];

fn tag(v: f64) -> String {
    v.to_string().replace('.', "p")
}

fn n1_panels(
    make: fn(f64, f64) -> ModelConfig,
    values: &[f64],
    vary_gamma: bool,
    fixed: f64,
    strategy: bool,
) -> Vec<PanelSpec> {
    values
        .iter()
        .map(|&v| {
            let (g, f) = if vary_gamma { (v, fixed) } else { (fixed, v) };
            let cfg = make(g, f);
            PanelSpec {
                name: if vary_gamma { format!("gamma{}", tag(v)) } else { format!("phi{}", tag(v)) },
                kind: if strategy { PanelKind::Strategy(cfg) } else { PanelKind::Position(cfg) },
            }
        })
        .collect()
}

fn chain_panels(terminal: [f64; 2], phi: [f64; 2], overall_mode: bool, strategy: bool) -> Vec<PanelSpec> {
    CHAIN_RATES
        .iter()
        .map(|&(x, y)| {
            let aversion = AversionSpec::two_state(terminal, phi, x, y);
            let cfg = if overall_mode { overall(aversion) } else { partial(aversion) };
            PanelSpec {
                name: format!("x{}_y{}", tag(x), tag(y)),
                kind: if strategy { PanelKind::Strategy(cfg) } else { PanelKind::Position(cfg) },
            }
        })
        .collect()
}

/// Sweep definition for one figure id (case-insensitive).
pub fn figure_spec(id: &str) -> Option<FigureSpec> {
    let id = FIGURE_IDS.iter().find(|f| f.eq_ignore_ascii_case(id))?;
    let (title, panels) = match *id {
        "F1" => ("phi = 0, HFT average position", n1_panels(partial_n1, &[0.0, 0.1, 2.0], true, 0.0, false)),
        "F2" => ("Gamma = 0, HFT average position", n1_panels(partial_n1, &[0.0, 5.0, 10.0], false, 0.0, false)),
        "F3" => (
            "LT profit difference, phi = 10, Gamma = 2",
            vec![PanelSpec {
                name: "lambdaH_scan".into(),
                kind: PanelKind::LambdaScan {
                    base: partial_n1(2.0, 10.0),
                    values: lambda_h_scan(),
                },
            }],
        ),
        "F4" => (
            "phi = (0, 10), Gamma = (0, 2), HFT average position",
            chain_panels([0.0, 2.0], [0.0, 10.0], false, false),
        ),
        "F5" => (
            "phi = (0, 10), Gamma = (2, 0), HFT average position",
            chain_panels([2.0, 0.0], [0.0, 10.0], false, false),
        ),
        "F6" => ("phi = 0, LT strategy", n1_panels(overall_n1, &[0.0, 0.1, 2.0], true, 0.0, true)),
        "F7" => ("phi = 0, HFT average position", n1_panels(overall_n1, &[0.0, 0.1, 2.0], true, 0.0, false)),
        "F8" => ("Gamma = 0, LT strategy", n1_panels(overall_n1, &[0.0, 1.0, 5.0], false, 0.0, true)),
        "F9" => ("Gamma = 0, HFT average position", n1_panels(overall_n1, &[0.0, 1.0, 5.0], false, 0.0, false)),
        "F10" => (
            "LT profit difference in equilibrium, phi = 10, Gamma = 2",
            vec![PanelSpec {
                name: "lambdaH_scan".into(),
                kind: PanelKind::LambdaScan {
                    base: overall_n1(2.0, 10.0),
                    values: lambda_h_scan(),
                },
            }],
        ),
        "F11" => ("phi = (0, 10), Gamma = (2, 0), LT strategy", chain_panels([2.0, 0.0], [0.0, 10.0], true, true)),
        "F12" => (
            "phi = (0, 10), Gamma = (2, 0), HFT average position",
            chain_panels([2.0, 0.0], [0.0, 10.0], true, false),
        ),
        _ => unreachable!(),
    };
    Some(FigureSpec {
        id,
        title: title.into(),
        panels,
    })
}

/// Solver overrides applied to every sweep point.
#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOverrides {
    pub grid: Option<usize>,
    pub integrator: Option<Integrator>,
}

impl SweepOverrides {
    pub fn apply(&self, cfg: &mut ModelConfig) {
        if let Some(g) = self.grid {
            cfg.solver.grid_steps_per_unit_time = g;
        }
        if let Some(i) = self.integrator {
            cfg.solver.integrator = i;
        }
    }
}

/// Profit table across `lambdaH`; partial configs use their own schedule,
/// overall configs re-solve the equilibrium at every point.
pub fn lambda_scan_table(base: &ModelConfig, values: &[f64]) -> Result<Table, SolveError> {
    let rows: Vec<[f64; 4]> = values
        .par_iter()
        .map(|&lh| {
            let mut cfg = base.clone();
            cfg.market.lambda_h = lh;
            let report = match cfg.mode {
                crate::config::Mode::Partial => {
                    let xi = cfg.quantities().unwrap_or_default().to_vec();
                    let mf = solve_partial(&cfg, &xi)?;
                    crate::lt::lt_profit(&cfg, &xi, &mf, cfg.market.p0)
                }
                crate::config::Mode::Overall => {
                    let eq = solve_overall(&cfg)?;
                    crate::lt::lt_profit(&cfg, &eq.xi_star, &eq.mean_field, cfg.market.p0)
                }
            };
            Ok([lh, report.profit_no_hft, report.profit_with_hft, report.difference])
        })
        .collect::<Result<_, SolveError>>()?;
    let mut table = Table::new(["lambdaH", "profit_no_hft", "profit_with_hft", "difference"]).for_config(base);
    for r in rows {
        table.push_f64(&r);
    }
    Ok(table)
}

fn panel_table(kind: &PanelKind) -> Result<Table, SolveError> {
    match kind {
        PanelKind::Position(cfg) => {
            let eq = Equilibrium::solve(cfg)?;
            Ok(equilibrium_table(cfg, &eq.mean_field))
        }
        PanelKind::Strategy(cfg) => {
            let eq = solve_overall(cfg)?;
            Ok(xi_table(cfg, &cfg.schedule.times, &eq.xi_star))
        }
        PanelKind::LambdaScan { base, values } => lambda_scan_table(base, values),
    }
}

fn panel_svg(table: &Table, kind: &PanelKind, title: &str) -> String {
    let svg = match kind {
        PanelKind::Position(_) => plot_table(table, "time", &["E_agg"], title, "E", false),
        PanelKind::Strategy(_) => plot_table(table, "t_k", &["xi_star_k"], title, "xi", true),
        PanelKind::LambdaScan { .. } => plot_table(table, "lambdaH", &["difference"], title, "profit difference", false),
    };
    svg.expect("panel tables carry their plotted columns")
}

/// Applies overrides to a panel's configs.
fn with_overrides(mut panel: PanelSpec, ov: &SweepOverrides) -> PanelSpec {
    match &mut panel.kind {
        PanelKind::Position(c) | PanelKind::Strategy(c) => ov.apply(c),
        PanelKind::LambdaScan { base, .. } => ov.apply(base),
    }
    panel
}

#[derive(Debug, thiserror::Error)]
pub enum FigureError {
    #[error("unknown figure id `{0}` (expected F1..F12)")]
    UnknownId(String),
    #[error("figure {id} panel {panel}: {source}")]
    Solve {
        id: String,
        panel: String,
        #[source]
        source: SolveError,
    },
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Writes `<out>/<id>_<panel>.csv` and `.svg` for each requested figure and
/// returns the written paths in a stable order.
pub fn run_figures(ids: &[String], out_dir: &Path, ov: &SweepOverrides) -> Result<Vec<PathBuf>, FigureError> {
    let specs = ids
        .iter()
        .map(|id| figure_spec(id).ok_or_else(|| FigureError::UnknownId(id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(&'static str, String, PanelSpec)> = specs
        .iter()
        .flat_map(|f| {
            f.panels
                .iter()
                .map(move |p| (f.id, f.title.clone(), with_overrides(p.clone(), ov)))
        })
        .collect();
    let written: Vec<Vec<PathBuf>> = jobs
        .par_iter()
        .map(|(id, title, panel)| {
            let table = panel_table(&panel.kind).map_err(|source| FigureError::Solve {
                id: id.to_string(),
                panel: panel.name.clone(),
                source,
            })?;
            let stem = format!("{}_{}", id.to_lowercase(), panel.name);
            let csv_path = out_dir.join(format!("{stem}.csv"));
            let text = table.render();
            let io = |path: &Path| {
                let path = path.display().to_string();
                move |source| FigureError::Io { path, source }
            };
            super::csv::write_atomic(&csv_path, text.as_bytes()).map_err(io(&csv_path))?;
            let parsed = Table::parse(&text).expect("rendered table parses");
            let svg = panel_svg(&parsed, &panel.kind, &format!("{id} {title} ({})", panel.name));
            let svg_path = out_dir.join(format!("{stem}.svg"));
            super::csv::write_atomic(&svg_path, svg.as_bytes()).map_err(io(&svg_path))?;
            Ok(vec![csv_path, svg_path])
        })
        .collect::<Result<_, FigureError>>()?;
    Ok(written.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_id_has_a_spec() {
        for id in FIGURE_IDS {
            let spec = figure_spec(id).unwrap();
            assert!(!spec.panels.is_empty());
        }
        assert_eq!(figure_spec("f4").unwrap().panels.len(), 4);
        assert!(figure_spec("F13").is_none());
    }

    #[test]
    fn sweep_points_are_valid_configs() {
        for id in FIGURE_IDS {
            for p in figure_spec(id).unwrap().panels {
                match p.kind {
                    PanelKind::Position(c) | PanelKind::Strategy(c) => c.validate().unwrap(),
                    PanelKind::LambdaScan { base, values } => {
                        for lh in values {
                            let mut c = base.clone();
                            c.market.lambda_h = lh;
                            c.validate().unwrap();
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn unknown_and_empty_ids() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_figures(&["F99".into()], dir.path(), &SweepOverrides::default()).unwrap_err();
        assert!(matches!(err, FigureError::UnknownId(_)));
        assert!(run_figures(&[], dir.path(), &SweepOverrides::default()).unwrap().is_empty());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
