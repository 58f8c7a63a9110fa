use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use hftmfg_ffi::*;

const BASELINE: &str = r#"{
    "market": {"gamma": 1, "gammaH": 0.7, "lambda": 0.4, "lambdaH": 0.1,
               "eta": 0.05, "eta0": 0.05, "sigma": 0},
    "aversion": {"Gamma": [2], "phi": [0], "Q": [[0]], "p0": [1]},
    "schedule": {"T": 1, "times": [0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9],
                 "quantities": [1,1,1,1,1,1,1,1,1]},
    "population": {"E0": [0], "inventory_bound": 1},
    "solver": {"grid_steps_per_unit_time": 1000, "integrator": "rk4",
               "shooting_tolerance": 1e-6},
    "mode": "partial"
}"#;

fn last_error() -> String {
    let len = hftmfg_last_error_length();
    let mut buf = vec![0 as c_char; len + 1];
    let status = unsafe { hftmfg_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(status, HftmfgStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn config(json: &str) -> Result<*mut HftmfgConfig, (HftmfgStatus, String)> {
    let text = CString::new(json).unwrap();
    let mut cfg = ptr::null_mut();
    match unsafe { hftmfg_config_from_json(text.as_ptr(), &mut cfg) } {
        HftmfgStatus::Ok => Ok(cfg),
        s => Err((s, last_error())),
    }
}

#[test]
fn solve_and_read_back() {
    let cfg = config(BASELINE).unwrap();
    let (mut n, mut k) = (0usize, 0usize);
    unsafe {
        assert_eq!(hftmfg_config_dimensions(cfg, &mut n, &mut k), HftmfgStatus::Ok);
        assert_eq!((n, k), (1, 9));

        let mut eq = ptr::null_mut();
        assert_eq!(hftmfg_solve(cfg, &mut eq), HftmfgStatus::Ok);
        let mut nodes = 0usize;
        assert_eq!(hftmfg_equilibrium_node_count(eq, &mut nodes), HftmfgStatus::Ok);
        // 1000 steps over ten segments, each with both endpoints
        assert_eq!(nodes, 1010);

        let (mut t, mut e, mut mu) = (vec![0.0; nodes], vec![0.0; nodes], vec![0.0; nodes]);
        let status = hftmfg_equilibrium_aggregate(eq, t.as_mut_ptr(), e.as_mut_ptr(), mu.as_mut_ptr(), nodes);
        assert_eq!(status, HftmfgStatus::Ok);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[nodes - 1], 1.0);
        assert_eq!(e[0], 0.0);

        let mut xi = vec![0.0; 9];
        assert_eq!(hftmfg_equilibrium_schedule(eq, xi.as_mut_ptr(), 9), HftmfgStatus::Ok);
        assert_eq!(xi, vec![1.0; 9]);

        let (mut no_hft, mut with_hft) = (0.0, 0.0);
        assert_eq!(hftmfg_equilibrium_profit(eq, &mut no_hft, &mut with_hft), HftmfgStatus::Ok);
        // -(gamma * 45 + (lambda + eta0) * 9) with P0 = 0
        assert!((no_hft + 49.05).abs() < 1e-10);

        let (mut term, mut jump) = (1.0, 1.0);
        assert_eq!(hftmfg_equilibrium_residuals(eq, &mut term, &mut jump), HftmfgStatus::Ok);
        assert!(term < 1e-6 && jump < 1e-6);

        let mut short = vec![0.0; 3];
        let status = hftmfg_equilibrium_schedule(eq, short.as_mut_ptr(), 3);
        assert_eq!(status, HftmfgStatus::BufferTooSmall);
        assert!(last_error().contains("9 needed"));

        hftmfg_equilibrium_free(eq);
        hftmfg_config_free(cfg);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let (status, msg) = config("{ not json").unwrap_err();
    assert_eq!(status, HftmfgStatus::Parse);
    assert!(!msg.is_empty());

    let bad_q = BASELINE.replace(r#""Q": [[0]]"#, r#""Q": [[0.5]]"#);
    let (status, msg) = config(&bad_q).unwrap_err();
    assert_eq!(status, HftmfgStatus::Validation);
    assert!(msg.contains("aversion.Q"), "{msg}");

    let mut cfg = ptr::null_mut();
    let status = unsafe { hftmfg_config_from_json(ptr::null(), &mut cfg) };
    assert_eq!(status, HftmfgStatus::NullPointer);

    let invalid = [0xffu8 as c_char, 0];
    let status = unsafe { hftmfg_config_from_json(invalid.as_ptr(), &mut cfg) };
    assert_eq!(status, HftmfgStatus::InvalidUtf8);

    let path = CString::new("/nonexistent/config.json").unwrap();
    let status = unsafe { hftmfg_config_from_file(path.as_ptr(), &mut cfg) };
    assert_eq!(status, HftmfgStatus::Io);

    let cfg = config(BASELINE).unwrap();
    unsafe {
        assert_eq!(hftmfg_config_set_grid(cfg, 1), HftmfgStatus::Validation);
        assert_eq!(hftmfg_config_set_grid(cfg, 2000), HftmfgStatus::Ok);
        assert_eq!(hftmfg_last_error_length(), 0);
        let mut overall = -1;
        assert_eq!(hftmfg_config_is_overall(cfg, &mut overall), HftmfgStatus::Ok);
        assert_eq!(overall, 0);
        assert_eq!(hftmfg_config_is_overall(cfg, ptr::null_mut()), HftmfgStatus::NullPointer);
        hftmfg_config_free(cfg);
        hftmfg_config_free(ptr::null_mut());
        hftmfg_equilibrium_free(ptr::null_mut());
    }
}

#[test]
fn config_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, BASELINE).unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(hftmfg_config_from_file(c_path.as_ptr(), &mut cfg), HftmfgStatus::Ok);
        hftmfg_config_free(cfg);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(hftmfg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(crate_dir().join("include/hftmfg.h")).unwrap();
    let source = std::fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct HftmfgConfig HftmfgConfig;"));
}

fn static_lib() -> Option<PathBuf> {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libhftmfg_ffi.a");
    lib.exists().then_some(lib)
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok()
}

#[test]
fn c_program_links_and_runs() {
    let Some(lib) = static_lib() else {
        eprintln!("static library not built; skipping");
        return;
    };
    if !have_cc() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let include: &Path = &crate_dir().join("include");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(crate_dir().join("tests/smoke.c"))
        .arg("-I")
        .arg(include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("nodes=1010"), "{text}");
    assert!(text.contains("profit_no_hft=-49.05"), "{text}");
}
