//! C ABI over the equilibrium engine.
//!
//! Handles are opaque pointers created by `*_new`/`*_from_*` functions and
//! released with the matching `*_free`. Every entry point returns an
//! [`HftmfgStatus`]; on failure the message is kept per thread and can be
//! copied out with [`hftmfg_last_error_message`]. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hftmfg::config::{from_json_str, load_config, Mode, ModelConfig};
use hftmfg::equilibrium::Equilibrium;
use hftmfg::{ConfigError, SolveError};

/// Result codes of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HftmfgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Solver = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Validated model configuration.
pub struct HftmfgConfig(ModelConfig);

/// Solved equilibrium (partial or overall, following the config's mode).
pub struct HftmfgEquilibrium(Equilibrium);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Failure(HftmfgStatus, String);

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let status = match e {
            ConfigError::Io { .. } => HftmfgStatus::Io,
            ConfigError::Parse(_) => HftmfgStatus::Parse,
            _ => HftmfgStatus::Validation,
        };
        Failure(status, e.to_string())
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Config(c) => c.into(),
            other => Failure(HftmfgStatus::Solver, other.to_string()),
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(HftmfgStatus::NullPointer, format!("`{what}` is null"))
}

fn guard<F>(f: F) -> HftmfgStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HftmfgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            HftmfgStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(HftmfgStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(Failure(
            HftmfgStatus::BufferTooSmall,
            format!("`{what}` holds {len} values, {need} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    *p = v;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hftmfg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the calling thread's last error message, excluding
/// the terminating NUL.
#[no_mangle]
pub extern "C" fn hftmfg_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message (NUL-terminated) into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hftmfg_last_error_message(buf: *mut c_char, len: usize) -> HftmfgStatus {
    if buf.is_null() {
        return HftmfgStatus::NullPointer;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if len < msg.len() + 1 {
            return HftmfgStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), msg.len());
        *buf.add(msg.len()) = 0;
        HftmfgStatus::Ok
    })
}

/// Parses and validates a JSON config.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hftmfg_config_from_json(json: *const c_char, out: *mut *mut HftmfgConfig) -> HftmfgStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = from_json_str(text)?;
        *out = Box::into_raw(Box::new(HftmfgConfig(cfg)));
        Ok(())
    })
}

/// Reads, parses and validates a JSON config file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hftmfg_config_from_file(path: *const c_char, out: *mut *mut HftmfgConfig) -> HftmfgStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = load_config(path)?;
        *out = Box::into_raw(Box::new(HftmfgConfig(cfg)));
        Ok(())
    })
}

/// Releases a config. Null is ignored.
///
/// # Safety
/// `cfg` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hftmfg_config_free(cfg: *mut HftmfgConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Sets the solver resolution (steps per unit time) and revalidates.
///
/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn hftmfg_config_set_grid(cfg: *mut HftmfgConfig, steps_per_unit_time: usize) -> HftmfgStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let mut next = cfg.0.clone();
        next.solver.grid_steps_per_unit_time = steps_per_unit_time;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// Number of aversion states and of LT trade dates.
///
/// # Safety
/// `cfg` must be a live config handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn hftmfg_config_dimensions(
    cfg: *const HftmfgConfig,
    n_states: *mut usize,
    n_trades: *mut usize,
) -> HftmfgStatus {
    guard(|| {
        let cfg = deref(cfg, "cfg")?;
        write_out(n_states, cfg.0.n_states(), "n_states")?;
        write_out(n_trades, cfg.0.schedule.times.len(), "n_trades")
    })
}

/// 1 when the config asks for the overall equilibrium, 0 for partial.
///
/// # Safety
/// `cfg` must be a live config handle; `overall` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hftmfg_config_is_overall(cfg: *const HftmfgConfig, overall: *mut i32) -> HftmfgStatus {
    guard(|| {
        let cfg = deref(cfg, "cfg")?;
        write_out(overall, i32::from(cfg.0.mode == Mode::Overall), "overall")
    })
}

/// Solves the equilibrium described by `cfg`.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hftmfg_solve(cfg: *const HftmfgConfig, out: *mut *mut HftmfgEquilibrium) -> HftmfgStatus {
    guard(|| {
        let cfg = deref(cfg, "cfg")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let eq = Equilibrium::solve(&cfg.0)?;
        *out = Box::into_raw(Box::new(HftmfgEquilibrium(eq)));
        Ok(())
    })
}

/// Releases an equilibrium. Null is ignored.
///
/// # Safety
/// `eq` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hftmfg_equilibrium_free(eq: *mut HftmfgEquilibrium) {
    if !eq.is_null() {
        drop(Box::from_raw(eq));
    }
}

/// Number of grid nodes; trade dates are counted twice (left limit and
/// value).
///
/// # Safety
/// `eq` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hftmfg_equilibrium_node_count(eq: *const HftmfgEquilibrium, out: *mut usize) -> HftmfgStatus {
    guard(|| {
        let eq = deref(eq, "eq")?;
        write_out(out, eq.0.mean_field.grid().node_count(), "out")
    })
}

/// Copies node times and the aggregate `E` and `mu` into caller buffers of
/// at least `hftmfg_equilibrium_node_count` entries.
///
/// # Safety
/// `eq` must be a live handle; each buffer must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hftmfg_equilibrium_aggregate(
    eq: *const HftmfgEquilibrium,
    times: *mut f64,
    e_agg: *mut f64,
    mu_agg: *mut f64,
    len: usize,
) -> HftmfgStatus {
    guard(|| {
        let eq = deref(eq, "eq")?;
        let mf = &eq.0.mean_field;
        let need = mf.grid().node_count();
        let times = out_slice(times, len, need, "times")?;
        let e_out = out_slice(e_agg, len, need, "e_agg")?;
        let mu_out = out_slice(mu_agg, len, need, "mu_agg")?;
        for (idx, ((_, _, t, e), mu)) in mf
            .e_agg
            .iter_nodes()
            .zip(mf.mu_agg.iter_nodes().map(|n| n.3[0]))
            .enumerate()
        {
            times[idx] = t;
            e_out[idx] = e[0];
            mu_out[idx] = mu;
        }
        Ok(())
    })
}

/// Copies the LT schedule (the equilibrium `xi*` in overall mode) into
/// `xi`, which must hold at least one entry per trade date.
///
/// # Safety
/// `eq` must be a live handle; `xi` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hftmfg_equilibrium_schedule(eq: *const HftmfgEquilibrium, xi: *mut f64, len: usize) -> HftmfgStatus {
    guard(|| {
        let eq = deref(eq, "eq")?;
        let out = out_slice(xi, len, eq.0.xi.len(), "xi")?;
        out.copy_from_slice(&eq.0.xi);
        Ok(())
    })
}

/// Expected LT profit without and with the HFT population.
///
/// # Safety
/// `eq` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn hftmfg_equilibrium_profit(
    eq: *const HftmfgEquilibrium,
    profit_no_hft: *mut f64,
    profit_with_hft: *mut f64,
) -> HftmfgStatus {
    guard(|| {
        let eq = deref(eq, "eq")?;
        let p = eq.0.profit();
        write_out(profit_no_hft, p.profit_no_hft, "profit_no_hft")?;
        write_out(profit_with_hft, p.profit_with_hft, "profit_with_hft")
    })
}

/// Terminal-condition residual and the worst speed-jump residual.
///
/// # Safety
/// `eq` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn hftmfg_equilibrium_residuals(
    eq: *const HftmfgEquilibrium,
    terminal: *mut f64,
    worst_jump: *mut f64,
) -> HftmfgStatus {
    guard(|| {
        let eq = deref(eq, "eq")?;
        let r = &eq.0.mean_field.residuals;
        write_out(terminal, r.terminal, "terminal")?;
        write_out(worst_jump, r.worst_jump(), "worst_jump")
    })
}
