mod common;

use hftmfg::config::{load_config, presets, Mode};
use hftmfg::equilibrium::Equilibrium;
use hftmfg::sim::{
    deviation_gain, lt_deviation_gain, sample_price_paths, simulate_population, DeviationProblem, SimSettings,
};

fn coarse(mut cfg: hftmfg::ModelConfig) -> Equilibrium {
    cfg.solver.grid_steps_per_unit_time = 500;
    Equilibrium::solve(&cfg).unwrap()
}

fn settings(agents: usize, replication: u64) -> SimSettings {
    SimSettings {
        agents,
        seed: 11,
        replication,
        dump_agents: false,
    }
}

#[test]
fn replications_are_reproducible_and_distinct() {
    let eq = coarse(presets::two_state_partial(0.5, 0.5));
    let a = simulate_population(&eq, &settings(200, 3)).unwrap();
    let b = simulate_population(&eq, &settings(200, 3)).unwrap();
    let c = simulate_population(&eq, &settings(200, 4)).unwrap();
    assert_eq!(a.vbar, b.vbar);
    assert_eq!(a.theta, b.theta);
    assert_eq!(a.metrics, b.metrics);
    assert_ne!(a.vbar, c.vbar);
}

#[test]
fn empirical_state_shares_stay_on_the_simplex() {
    let eq = coarse(presets::two_state_partial(0.8, 0.2));
    let out = simulate_population(&eq, &settings(300, 0)).unwrap();
    assert_eq!(out.theta.len(), out.times.len());
    for row in &out.theta {
        assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)), "{row:?}");
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert!(out.max_abs_inventory <= out.inventory_bound);
}

#[test]
fn larger_populations_track_the_mean_field_closer() {
    let eq = coarse(presets::two_state_partial(0.5, 0.5));
    let small: f64 = (0..6).map(|r| simulate_population(&eq, &settings(50, r)).unwrap().metrics.vbar_l2).sum();
    let large: f64 = (0..6).map(|r| simulate_population(&eq, &settings(5_000, r)).unwrap().metrics.vbar_l2).sum();
    assert!(large < 0.2 * small, "{large} vs {small}");
}

#[test]
fn no_gain_against_the_exact_mean_field() {
    let eq = Equilibrium::solve(&presets::two_state_partial(0.5, 0.5)).unwrap();
    for (x0, y0) in [(0.0, 0), (0.7, 1), (-1.2, 0)] {
        let d = DeviationProblem::mean_field_limit(&eq, x0, y0).solve().unwrap();
        assert!(d.gain.abs() < 1e-7 * d.j_mfg.abs().max(1.0), "{d:?}");
    }
}

#[test]
fn constant_bump_costs_eta_times_cell_length() {
    let eq = Equilibrium::solve(&presets::partial_n1(2.0, 5.0)).unwrap();
    let base = DeviationProblem::mean_field_limit(&eq, 0.3, 0).solve().unwrap();
    let grid = eq.mean_field.grid().clone();
    let (s, j, amount) = (4, 300, 2.0);
    let dt = grid.segment(s)[j + 1] - grid.segment(s)[j];
    let mut bumped = DeviationProblem::mean_field_limit(&eq, 0.3, 0);
    bumped.bump = Some((s, j, amount));
    let b = bumped.solve().unwrap();
    let loss = base.j_mfg - b.j_mfg;
    let expected = eq.cfg.market.eta * amount * amount * dt;
    assert!((loss / expected - 1.0).abs() < 0.02, "loss {loss:e}, expected {expected:e}");
    assert!((b.j_best - base.j_best).abs() < 1e-12);
}

#[test]
fn finite_population_gains_are_nonnegative() {
    let cfg = load_config(common::config_path("overall_two_state.json")).unwrap();
    assert_eq!(cfg.mode, Mode::Overall);
    let eq = Equilibrium::solve(&cfg).unwrap();
    for r in 0..3 {
        let out = simulate_population(&eq, &settings(100, r)).unwrap();
        let hft = deviation_gain(&eq, &out).unwrap();
        let lt = lt_deviation_gain(&eq, &out);
        assert!(hft.gain >= -1e-10, "{hft:?}");
        assert!(lt.gain >= -1e-10, "{lt:?}");
    }
}

#[test]
fn price_sampling_without_noise_is_exact() {
    let cfg = presets::partial_n1(2.0, 0.0);
    let sample = sample_price_paths(&cfg, &[1.0; 9], &[0.0; 9], 100, 5);
    assert!(sample.revenues.iter().all(|&r| r == sample.analytic));
    assert!(sample.std_error < 1e-12);
    assert!((sample.analytic + 49.05).abs() < 1e-12, "{}", sample.analytic);
}

#[test]
fn price_sampling_is_seeded() {
    let mut cfg = presets::partial_n1(2.0, 0.0);
    cfg.market.sigma = 0.5;
    let a = sample_price_paths(&cfg, &[1.0; 9], &[0.1; 9], 500, 5);
    let b = sample_price_paths(&cfg, &[1.0; 9], &[0.1; 9], 500, 5);
    let c = sample_price_paths(&cfg, &[1.0; 9], &[0.1; 9], 500, 6);
    assert_eq!(a, b);
    assert_ne!(a.revenues, c.revenues);
}

#[test]
fn lt_gain_vanishes_without_hft_impact() {
    let mut cfg = presets::overall_n1(2.0, 5.0);
    cfg.market.gamma_h = 0.0;
    cfg.market.lambda_h = 0.0;
    let eq = coarse(cfg);
    let out = simulate_population(&eq, &settings(100, 0)).unwrap();
    let lt = lt_deviation_gain(&eq, &out);
    assert!(lt.gain.abs() < 1e-12, "{lt:?}");
}
