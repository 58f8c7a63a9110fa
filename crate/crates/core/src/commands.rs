//! Implementations behind the `hftmfg` subcommands. Each returns the files it
//! wrote; the binary maps errors to exit codes.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{load_config_unchecked, load_config_with_overrides, Mode, ModelConfig};
use crate::equilibrium::Equilibrium;
use crate::error::{ConfigError, SolveError};
use crate::ode::Integrator;
use crate::report::csv::{equilibrium_table, fmt_f64, key_value_table, write_atomic, xi_table, Table};
use crate::report::figures::{run_figures, FigureError, SweepOverrides, FIGURE_IDS};
use crate::report::svg::plot_table;
use crate::report::validate::{builtin_configs, validate_configs, ValidationReport};
use crate::sim::{deviation_gain, lt_deviation_gain, sample_price_paths, simulate_population, SimSettings};

/// Prefix of environment variables overriding config keys, e.g.
/// `HFTMFG_MARKET__LAMBDAH=0.2`.
pub const ENV_PREFIX: &str = "HFTMFG_";

/// Replications of the price-path Monte Carlo run when `sigma > 0`.
pub const PRICE_REPLICATIONS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct GlobalArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub grid: Option<usize>,
    pub integrator: Option<Integrator>,
}

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Figure(#[from] FigureError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
}

impl CommandError {
    /// 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn overrides(args: &GlobalArgs) -> SweepOverrides {
    SweepOverrides {
        grid: args.grid,
        integrator: args.integrator,
    }
}

fn env_pairs() -> Vec<(String, String)> {
    std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect()
}

/// Loads `--config` with environment and flag overrides applied.
pub fn load(args: &GlobalArgs) -> Result<ModelConfig, CommandError> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| CommandError::Usage("--config is required for this command".into()))?;
    let mut cfg = load_config_with_overrides(path, ENV_PREFIX, env_pairs())?;
    overrides(args).apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn require_mode(cfg: &ModelConfig, mode: Mode) -> Result<(), CommandError> {
    if cfg.mode != mode {
        return Err(SolveError::Mode(format!("config has mode {:?}, command needs {mode:?}", cfg.mode)).into());
    }
    Ok(())
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Self {
        Writer {
            dir,
            written: Vec::new(),
        }
    }

    fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CommandError> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes).map_err(|source| CommandError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    /// Writes a table, then optionally an SVG drawn from the written text.
    fn table(&mut self, name: &str, table: &Table) -> Result<Table, CommandError> {
        let text = table.render();
        self.bytes(name, text.as_bytes())?;
        Ok(Table::parse(&text).expect("rendered table parses"))
    }

    fn plot(&mut self, name: &str, svg: Option<String>) -> Result<(), CommandError> {
        match svg {
            Some(svg) => self.bytes(name, svg.as_bytes()),
            None => Ok(()),
        }
    }
}

fn warn_residuals(eq: &Equilibrium) {
    for w in eq.mean_field.residuals.warnings() {
        eprintln!("WARN {w}");
    }
}

fn residual_tables(cfg: &ModelConfig, eq: &Equilibrium) -> (Table, Table) {
    let r = &eq.mean_field.residuals;
    let summary = key_value_table(
        cfg,
        &[
            ("terminal_residual", r.terminal),
            ("initial_residual", r.initial),
            ("worst_jump_residual", r.worst_jump()),
            ("terminal_condition_number", r.terminal_condition_number),
            ("tolerance", r.tolerance),
        ],
    );
    let mut jumps = Table::new([
        "k",
        "t_k",
        "expected_jump",
        "aggregate_jump",
        "aggregate_residual",
        "state_residual",
        "continuity_residual",
    ])
    .for_config(cfg);
    for j in &r.jumps {
        jumps.push(vec![
            j.k.to_string(),
            fmt_f64(j.time),
            fmt_f64(j.expected),
            fmt_f64(j.aggregate_jump),
            fmt_f64(j.aggregate_residual),
            fmt_f64(j.state_residual),
            fmt_f64(j.continuity_residual),
        ]);
    }
    (summary, jumps)
}

fn profit_table(cfg: &ModelConfig, eq: &Equilibrium, seed: u64) -> Table {
    let p = eq.profit();
    let mut pairs = vec![
        ("profit_no_hft", p.profit_no_hft),
        ("profit_with_hft", p.profit_with_hft),
        ("difference", p.difference),
    ];
    if cfg.market.sigma > 0.0 {
        let g = crate::lt::hft_impact_at_trades(&eq.mean_field, &cfg.market, cfg.conventions.lt_speed_limit);
        let paths = sample_price_paths(cfg, &eq.xi, &g, PRICE_REPLICATIONS, seed);
        pairs.push(("sampled_mean", paths.mean));
        pairs.push(("sampled_std_error", paths.std_error));
        pairs.push(("sampled_replications", PRICE_REPLICATIONS as f64));
    }
    key_value_table(cfg, &pairs)
}

fn write_equilibrium(w: &mut Writer, cfg: &ModelConfig, eq: &Equilibrium) -> Result<(), CommandError> {
    let table = w.table("equilibrium.csv", &equilibrium_table(cfg, &eq.mean_field))?;
    let n = cfg.n_states();
    let mut e_cols: Vec<String> = (1..=n).map(|i| format!("E_{i}")).collect();
    let mut mu_cols: Vec<String> = (1..=n).map(|i| format!("mu_{i}")).collect();
    if n > 1 {
        e_cols.push("E_agg".into());
        mu_cols.push("mu_agg".into());
    }
    fn refs(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }
    w.plot("E.svg", plot_table(&table, "time", &refs(&e_cols), "HFT average position", "E", false))?;
    w.plot("mu.svg", plot_table(&table, "time", &refs(&mu_cols), "HFT average speed", "mu", false))?;
    let (summary, jumps) = residual_tables(cfg, eq);
    w.table("residuals.csv", &summary)?;
    w.table("jumps.csv", &jumps)?;
    Ok(())
}

pub fn solve_partial(args: &GlobalArgs) -> Result<Vec<PathBuf>, CommandError> {
    let cfg = load(args)?;
    require_mode(&cfg, Mode::Partial)?;
    let eq = Equilibrium::solve(&cfg)?;
    warn_residuals(&eq);
    let mut w = Writer::new(&args.out);
    write_equilibrium(&mut w, &cfg, &eq)?;
    w.table("profit.csv", &profit_table(&cfg, &eq, args.seed))?;
    Ok(w.written)
}

pub fn solve_overall(args: &GlobalArgs) -> Result<Vec<PathBuf>, CommandError> {
    let cfg = load(args)?;
    require_mode(&cfg, Mode::Overall)?;
    let eq = Equilibrium::solve(&cfg)?;
    warn_residuals(&eq);
    let ov = eq.overall.as_ref().expect("overall mode carries the LT solve");
    if ov.first_order_residual > crate::lt::FIXED_POINT_TOL {
        eprintln!(
            "WARN LT first-order residual {:.3e} > {:.1e}",
            ov.first_order_residual,
            crate::lt::FIXED_POINT_TOL
        );
    }
    if !ov.concavity.negative_definite {
        eprintln!("WARN LT objective Hessian is not negative definite");
    }
    let mut w = Writer::new(&args.out);
    let xi = w.table(
        "xi_star.csv",
        &xi_table(&cfg, &cfg.schedule.times, &ov.xi_star)
            .with_meta("first_order_residual", fmt_f64(ov.first_order_residual))
            .with_meta("condition_number", fmt_f64(ov.condition_number)),
    )?;
    w.plot("xi_star.svg", plot_table(&xi, "t_k", &["xi_star_k"], "LT equilibrium schedule", "xi", true))?;
    write_equilibrium(&mut w, &cfg, &eq)?;
    w.table("profit.csv", &profit_table(&cfg, &eq, args.seed))?;

    let c = &ov.concavity;
    let mut conc = Table::new(["index", "nash_eigenvalue", "full_response_eigenvalue"])
        .for_config(&cfg)
        .with_meta("negative_definite", c.negative_definite)
        .with_meta("full_response_negative_definite", c.full_response_negative_definite);
    for (i, (a, b)) in c.nash_eigenvalues.iter().zip(&c.full_response_eigenvalues).enumerate() {
        conc.push(vec![(i + 1).to_string(), fmt_f64(*a), fmt_f64(*b)]);
    }
    w.table("concavity.csv", &conc)?;
    Ok(w.written)
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub agents: Vec<usize>,
    pub seeds: usize,
    pub dump_agents: bool,
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Replication {
    agents: usize,
    seed: usize,
    metrics: [f64; 5],
    hft: [f64; 3],
    lt: Option<[f64; 3]>,
    dump: Option<Table>,
}

pub fn simulate(args: &GlobalArgs, sim: &SimulateArgs) -> Result<Vec<PathBuf>, CommandError> {
    if sim.agents.is_empty() || sim.agents.contains(&0) {
        return Err(CommandError::Usage("--agents needs one or more positive counts".into()));
    }
    if sim.seeds == 0 {
        return Err(CommandError::Usage("--seeds must be positive".into()));
    }
    let cfg = load(args)?;
    let eq = Equilibrium::solve(&cfg)?;
    warn_residuals(&eq);
    let overall = cfg.mode == Mode::Overall;
    let jobs: Vec<(usize, usize)> = sim
        .agents
        .iter()
        .flat_map(|&m| (0..sim.seeds).map(move |s| (m, s)))
        .collect();
    let reps: Vec<Replication> = jobs
        .par_iter()
        .map(|&(m, s)| -> Result<Replication, CommandError> {
            let settings = SimSettings {
                agents: m,
                seed: args.seed,
                replication: s as u64,
                dump_agents: sim.dump_agents,
            };
            let out = simulate_population(&eq, &settings)?;
            let d = deviation_gain(&eq, &out)?;
            let lt = overall.then(|| {
                let l = lt_deviation_gain(&eq, &out);
                [l.psi_star, l.psi_best, l.gain]
            });
            let dump = out.dump.as_ref().map(|rows| {
                let mut t = Table::new(["agent", "time", "state", "inventory"]).for_config(&cfg);
                for r in rows {
                    t.push(vec![
                        r.agent.to_string(),
                        fmt_f64(r.time),
                        (r.state + 1).to_string(),
                        fmt_f64(r.inventory),
                    ]);
                }
                t
            });
            let mt = &out.metrics;
            Ok(Replication {
                agents: m,
                seed: s,
                metrics: [mt.theta_dev, mt.z_dev, mt.vbar_l2, out.max_abs_inventory, out.inventory_bound],
                hft: [d.j_mfg, d.j_best, d.gain],
                lt,
                dump,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut w = Writer::new(&args.out);
    let mut metrics = Table::new([
        "agents",
        "seed",
        "theta_dev",
        "z_dev",
        "vbar_l2",
        "max_abs_inventory",
        "inventory_bound",
    ])
    .for_config(&cfg)
    .with_meta("base_seed", args.seed);
    let mut dev_cols = vec!["agents", "seed", "j_mfg", "j_best", "hft_gain"];
    if overall {
        dev_cols.extend(["psi_star", "psi_best", "lt_gain"]);
    }
    let mut deviation = Table::new(dev_cols).for_config(&cfg).with_meta("base_seed", args.seed);
    for r in &reps {
        let head = [r.agents.to_string(), r.seed.to_string()];
        metrics.push(head.iter().cloned().chain(r.metrics.iter().map(|v| fmt_f64(*v))).collect());
        let mut row: Vec<String> = head.iter().cloned().chain(r.hft.iter().map(|v| fmt_f64(*v))).collect();
        if let Some(lt) = r.lt {
            row.extend(lt.iter().map(|v| fmt_f64(*v)));
        }
        deviation.push(row);
    }
    w.table("metrics.csv", &metrics)?;
    w.table("deviation.csv", &deviation)?;
    for r in &reps {
        if let Some(t) = &r.dump {
            w.table(&format!("trajectories_M{}_seed{}.csv", r.agents, r.seed), t)?;
        }
    }

    let mut distinct = sim.agents.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let mut summary = Table::new(["agents", "median_vbar_l2", "median_hft_gain", "median_lt_gain"])
        .for_config(&cfg)
        .with_meta("seeds", sim.seeds);
    let mut med_l2 = Vec::new();
    for &m in &distinct {
        let pick = |f: &dyn Fn(&Replication) -> Option<f64>| {
            let v: Vec<f64> = reps.iter().filter(|r| r.agents == m).filter_map(f).collect();
            median(&v)
        };
        let l2 = pick(&|r| Some(r.metrics[2]));
        med_l2.push(l2);
        let hg = pick(&|r| Some(r.hft[2]));
        let lg = pick(&|r| r.lt.map(|l| l[2]));
        summary.push(vec![m.to_string(), fmt_f64(l2), fmt_f64(hg), fmt_f64(lg)]);
        println!("M={m}: median vbar_l2 {l2:.4e}, median HFT gain {hg:.4e}, median LT gain {lg:.4e}");
    }
    if distinct.len() >= 2 {
        let xs: Vec<f64> = distinct.iter().map(|&m| m as f64).collect();
        let slope = log_log_slope(&xs, &med_l2);
        summary = summary.with_meta("vbar_l2_loglog_slope", fmt_f64(slope));
        println!("log-log slope of median vbar_l2 against M: {slope:.4}");
    }
    w.table("convergence.csv", &summary)?;
    Ok(w.written)
}

/// `all` expands to every figure id.
pub fn figures(args: &GlobalArgs, ids: &[String]) -> Result<Vec<PathBuf>, CommandError> {
    let ids: Vec<String> = if ids.iter().any(|i| i.eq_ignore_ascii_case("all")) {
        FIGURE_IDS.iter().map(|s| s.to_string()).collect()
    } else {
        ids.to_vec()
    };
    Ok(run_figures(&ids, &args.out, &overrides(args))?)
}

/// Runs the invariant suite on `--config` (without rejecting it up front) or
/// on the built-in configs, and writes `validation.json`.
pub fn validate(args: &GlobalArgs) -> Result<(ValidationReport, PathBuf), CommandError> {
    let ov = overrides(args);
    let configs = match &args.config {
        Some(path) => {
            let mut cfg = load_config_unchecked(path, ENV_PREFIX, env_pairs())?;
            ov.apply(&mut cfg);
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "config".into());
            vec![(name, cfg)]
        }
        None => builtin_configs()
            .into_iter()
            .map(|(name, mut cfg)| {
                ov.apply(&mut cfg);
                (name, cfg)
            })
            .collect(),
    };
    let report = validate_configs(&configs);
    let mut w = Writer::new(&args.out);
    w.bytes("validation.json", report.to_json().as_bytes())?;
    Ok((report, w.written.remove(0)))
}
