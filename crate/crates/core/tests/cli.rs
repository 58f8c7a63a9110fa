mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::config_path;

fn hftmfg(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hftmfg"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("HFTMFG_MARKET__LAMBDAH")
        .output()
        .unwrap()
}

fn cfg(name: &str) -> String {
    config_path(name).to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec![],
        vec!["frobnicate"],
        vec!["solve-partial"],
        vec!["--integrator", "midpoint", "validate"],
        vec!["--config", &cfg("overall_two_state.json"), "simulate", "--agents", "0"],
    ] {
        let out = hftmfg(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = hftmfg(dir.path(), &["--config", missing.to_str().unwrap(), "solve-partial"]);
    assert_eq!(out.status.code(), Some(1));
    let out = hftmfg(dir.path(), &["--config", &cfg("partial_n1.json"), "solve-overall"]);
    assert_eq!(out.status.code(), Some(1));
    let out = hftmfg(dir.path(), &["figures", "F99"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_names_the_broken_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config_path("partial_two_state.json")).unwrap();
    let broken = text.replace("[-0.5, 0.5]", "[-0.5, 0.4]");
    assert_ne!(broken, text);
    let path = dir.path().join("broken.json");
    std::fs::write(&path, broken).unwrap();
    let out = hftmfg(dir.path(), &["--config", path.to_str().unwrap(), "--grid", "500", "validate"]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"broken/q_row_sums"), "{failed:?}");

    let out = hftmfg(dir.path(), &["--config", &cfg("partial_two_state.json"), "--grid", "2000", "validate"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn solve_partial_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = hftmfg(out, &["--config", &cfg("partial_two_state.json"), "--grid", "1000", "solve-partial"]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    for file in ["equilibrium.csv", "residuals.csv", "jumps.csv", "profit.csv", "E.svg", "mu.svg"] {
        let (x, y) = (std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
        assert!(!x.is_empty(), "{file}");
        assert_eq!(x, y, "{file}");
    }
    let table = std::fs::read_to_string(a.join("profit.csv")).unwrap();
    assert!(table.contains("profit_no_hft"));
}

#[test]
fn environment_overrides_reach_the_solver() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &Path, lambda_h: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_hftmfg"));
        cmd.arg("--out")
            .arg(out)
            .args(["--config", &cfg("partial_n1.json"), "--grid", "500", "solve-partial"]);
        match lambda_h {
            Some(v) => cmd.env("HFTMFG_MARKET__LAMBDAH", v),
            None => cmd.env_remove("HFTMFG_MARKET__LAMBDAH"),
        };
        assert!(cmd.status().unwrap().success());
        std::fs::read_to_string(out.join("profit.csv")).unwrap()
    };
    let base = run(&dir.path().join("base"), None);
    let patched = run(&dir.path().join("patched"), Some("0.3"));
    assert_ne!(base, patched);

    let bad = Command::new(env!("CARGO_BIN_EXE_hftmfg"))
        .arg("--out")
        .arg(dir.path())
        .args(["--config", &cfg("partial_n1.json"), "solve-partial"])
        .env("HFTMFG_MARKET__LAMBDAH", "-1")
        .status()
        .unwrap();
    assert_eq!(bad.code(), Some(1));
}

#[test]
fn solve_overall_writes_schedule_and_concavity() {
    let dir = tempfile::tempdir().unwrap();
    let out = hftmfg(dir.path(), &["--config", &cfg("overall_n1.json"), "--grid", "1000", "solve-overall"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let xi = std::fs::read_to_string(dir.path().join("xi_star.csv")).unwrap();
    let rows = xi.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 10, "{xi}");
    assert!(dir.path().join("concavity.csv").exists());
    assert!(dir.path().join("xi_star.svg").exists());
}

#[test]
fn simulate_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = hftmfg(
        dir.path(),
        &["--config", &cfg("overall_two_state.json"), "simulate", "--agents", "20,40", "--seeds", "2", "--dump-agents"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["metrics.csv", "deviation.csv", "convergence.csv", "trajectories_M20_seed0.csv", "trajectories_M40_seed1.csv"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
    let deviation = std::fs::read_to_string(dir.path().join("deviation.csv")).unwrap();
    assert!(deviation.contains("lt_gain"));
}

#[test]
fn figures_write_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let out = hftmfg(dir.path(), &["--grid", "500", "figures", "f1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.iter().filter(|n| n.ends_with(".csv")).count(), 3, "{names:?}");
    assert_eq!(names.iter().filter(|n| n.ends_with(".svg")).count(), 3, "{names:?}");
}
