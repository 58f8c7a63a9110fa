use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hftmfg::commands::{self, CommandError, GlobalArgs, SimulateArgs};
use hftmfg::ode::Integrator;

#[derive(Parser, Debug)]
#[command(name = "hftmfg", version, about = "Mean-field equilibria of a large trader against high-frequency traders")]
struct Cli {
    /// JSON model config; keys can be overridden with HFTMFG_SECTION__KEY=value.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Override solver.grid_steps_per_unit_time.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Override solver.integrator.
    #[arg(long, global = true, value_parser = parse_integrator)]
    integrator: Option<Integrator>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mean field for the config's fixed LT schedule.
    SolvePartial,
    /// Joint equilibrium with the LT best-responding.
    SolveOverall,
    /// Finite-population Monte Carlo and deviation gains.
    Simulate {
        /// Population sizes, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        agents: Vec<usize>,
        /// Replications per population size.
        #[arg(long, default_value_t = 30)]
        seeds: usize,
        /// Write every agent's trajectory (guarded at one million rows).
        #[arg(long)]
        dump_agents: bool,
    },
    /// Built-in figure sweeps: F1..F12 or `all`.
    Figures { ids: Vec<String> },
    /// Invariant suite; writes validation.json.
    Validate,
}

fn parse_integrator(s: &str) -> Result<Integrator, String> {
    match s.to_ascii_lowercase().as_str() {
        "rk4" => Ok(Integrator::Rk4),
        "euler" => Ok(Integrator::Euler),
        other => Err(format!("unknown integrator `{other}` (rk4 | euler)")),
    }
}

fn run(cli: Cli) -> Result<(), CommandError> {
    let args = GlobalArgs {
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        grid: cli.grid,
        integrator: cli.integrator,
    };
    let written = match cli.command {
        Command::SolvePartial => commands::solve_partial(&args)?,
        Command::SolveOverall => commands::solve_overall(&args)?,
        Command::Simulate {
            agents,
            seeds,
            dump_agents,
        } => commands::simulate(
            &args,
            &SimulateArgs {
                agents,
                seeds,
                dump_agents,
            },
        )?,
        Command::Figures { ids } => commands::figures(&args, &ids)?,
        Command::Validate => {
            let (report, path) = commands::validate(&args)?;
            for c in report.failures() {
                eprintln!("FAIL {}: {}", c.name, c.detail);
            }
            let failed = report.failures().count();
            println!("{} checks, {} failed; report in {}", report.checks.len(), failed, path.display());
            if failed > 0 {
                return Err(CommandError::Failed(format!("{failed} validation checks failed")));
            }
            vec![]
        }
    };
    for p in written {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
