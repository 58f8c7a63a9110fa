//! Model configuration: market, aversion chain, LT schedule, population and
//! solver settings, loaded from JSON and validated field by field.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ConfigError;
use crate::ode::Integrator;

/// Tolerance for generator row sums and the initial distribution total.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Tolerance on `xi0 + sum(xi) = 0` for user-fixed overall schedules.
pub const FEASIBILITY_TOL: f64 = 1e-12;
/// Smallest accepted grid density.
pub const MIN_STEPS_PER_UNIT_TIME: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Permanent impact of the LT.
    pub gamma: f64,
    /// Permanent impact of the aggregate HFT speed.
    #[serde(rename = "gammaH")]
    pub gamma_h: f64,
    /// Temporary impact of the LT.
    pub lambda: f64,
    /// Temporary impact of the aggregate HFT speed.
    #[serde(rename = "lambdaH")]
    pub lambda_h: f64,
    /// HFT trading fee.
    pub eta: f64,
    /// LT trading fee.
    pub eta0: f64,
    pub sigma: f64,
    /// Initial fair price used in profit reports.
    #[serde(rename = "P0", default)]
    pub p0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AversionSpec {
    /// Terminal inventory aversion per state.
    #[serde(rename = "Gamma")]
    pub terminal: Vec<f64>,
    /// Running inventory aversion per state.
    pub phi: Vec<f64>,
    /// Generator of the aversion-state chain (row i, column j = rate i -> j).
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub p0: Vec<f64>,
}

impl AversionSpec {
    pub fn n_states(&self) -> usize {
        self.terminal.len()
    }

    pub fn q_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n_states();
        nalgebra::DMatrix::from_fn(n, n, |i, j| self.q[i][j])
    }

    /// A single state with no transitions.
    pub fn single(terminal: f64, phi: f64) -> Self {
        AversionSpec {
            terminal: vec![terminal],
            phi: vec![phi],
            q: vec![vec![0.0]],
            p0: vec![1.0],
        }
    }

    /// Two states with generator `[[-x, x], [y, -y]]` and a uniform start.
    pub fn two_state(terminal: [f64; 2], phi: [f64; 2], x: f64, y: f64) -> Self {
        AversionSpec {
            terminal: terminal.to_vec(),
            phi: phi.to_vec(),
            q: vec![vec![-x, x], vec![y, -y]],
            p0: vec![0.5, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LtSchedule {
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Interior trade times, strictly increasing in (0, T).
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantities: Option<Vec<f64>>,
    /// Initial position to liquidate (overall mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi0: Option<f64>,
}

impl LtSchedule {
    pub fn n_trades(&self) -> usize {
        self.times.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationInit {
    #[serde(rename = "E0")]
    pub e0: Vec<f64>,
    pub inventory_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub grid_steps_per_unit_time: usize,
    pub integrator: Integrator,
    pub shooting_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Partial,
    Overall,
}

/// Which one-sided value of the HFT speed prices the LT's trade at `t_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitSide {
    Left,
    #[default]
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conventions {
    #[serde(default)]
    pub lt_speed_limit: LimitSide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub market: MarketParams,
    pub aversion: AversionSpec,
    pub schedule: LtSchedule,
    pub population: PopulationInit,
    pub solver: SolverSettings,
    pub mode: Mode,
    #[serde(default)]
    pub conventions: Conventions,
}

/// Reads, parses and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ModelConfig, ConfigError> {
    let value = read_value(path.as_ref())?;
    from_value(value)
}

/// Like [`load_config`], but first applies `PREFIX_SECTION__KEY=value`
/// overrides from the given environment pairs.
pub fn load_config_with_overrides<I>(
    path: impl AsRef<Path>,
    prefix: &str,
    env: I,
) -> Result<ModelConfig, ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut value = read_value(path.as_ref())?;
    apply_overrides(&mut value, prefix, env)?;
    from_value(value)
}

/// Reads a config and applies overrides without running [`ModelConfig::validate`],
/// so that a validation suite can report which invariant a file breaks.
pub fn load_config_unchecked<I>(path: impl AsRef<Path>, prefix: &str, env: I) -> Result<ModelConfig, ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut value = read_value(path.as_ref())?;
    apply_overrides(&mut value, prefix, env)?;
    Ok(serde_json::from_value(value)?)
}

pub fn from_json_str(text: &str) -> Result<ModelConfig, ConfigError> {
    from_value(serde_json::from_str(text)?)
}

fn read_value(path: &Path) -> Result<Value, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn from_value(value: Value) -> Result<ModelConfig, ConfigError> {
    let cfg: ModelConfig = serde_json::from_value(value)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Applies overrides of the form `PREFIX` + `section__key` (case-insensitive
/// path segments separated by `__`). Values parse as JSON, falling back to a
/// plain string.
pub fn apply_overrides<I>(root: &mut Value, prefix: &str, env: I) -> Result<(), ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut pairs: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(prefix) && k.len() > prefix.len())
        .collect();
    pairs.sort();
    for (key, raw) in pairs {
        let path: Vec<&str> = key[prefix.len()..].split("__").collect();
        let parsed = serde_json::from_str(&raw).unwrap_or(Value::String(raw.clone()));
        let mut node = &mut *root;
        for (depth, segment) in path.iter().enumerate() {
            let obj = node.as_object_mut().ok_or_else(|| ConfigError::Override {
                key: key.clone(),
                message: "path does not name an object".into(),
            })?;
            let name = obj
                .keys()
                .find(|k| k.eq_ignore_ascii_case(segment))
                .cloned()
                .unwrap_or_else(|| segment.to_ascii_lowercase());
            if depth + 1 == path.len() {
                obj.insert(name, parsed.clone());
                break;
            }
            node = obj
                .entry(name)
                .or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}

fn check_finite(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("{v} is not finite")))
    }
}

fn check_positive(field: &str, v: f64) -> Result<(), ConfigError> {
    check_finite(field, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be > 0, got {v}")))
    }
}

fn check_nonnegative(field: &str, v: f64) -> Result<(), ConfigError> {
    check_finite(field, v)?;
    if v >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be >= 0, got {v}")))
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_positive("market.gamma", self.gamma)?;
        check_positive("market.gammaH", self.gamma_h)?;
        check_positive("market.lambda", self.lambda)?;
        check_positive("market.lambdaH", self.lambda_h)?;
        check_positive("market.eta", self.eta)?;
        check_positive("market.eta0", self.eta0)?;
        check_nonnegative("market.sigma", self.sigma)?;
        check_finite("market.P0", self.p0)
    }

    /// `lambdaH + 2 eta`, the denominator of the speed jump at LT trades.
    pub fn jump_denominator(&self) -> f64 {
        self.lambda_h + 2.0 * self.eta
    }
}

impl AversionSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.terminal.len();
        if n == 0 {
            return Err(ConfigError::invalid("aversion.Gamma", "needs at least one state"));
        }
        if self.phi.len() != n {
            return Err(ConfigError::invalid(
                "aversion.phi",
                format!("length {} != number of states {n}", self.phi.len()),
            ));
        }
        if self.p0.len() != n {
            return Err(ConfigError::invalid(
                "aversion.p0",
                format!("length {} != number of states {n}", self.p0.len()),
            ));
        }
        if self.q.len() != n || self.q.iter().any(|row| row.len() != n) {
            return Err(ConfigError::invalid("aversion.Q", format!("must be {n}x{n}")));
        }
        for i in 0..n {
            check_nonnegative(&format!("aversion.Gamma[{i}]"), self.terminal[i])?;
            check_nonnegative(&format!("aversion.phi[{i}]"), self.phi[i])?;
            check_nonnegative(&format!("aversion.p0[{i}]"), self.p0[i])?;
            let mut sum = 0.0;
            for j in 0..n {
                let rate = self.q[i][j];
                check_finite(&format!("aversion.Q[{i}][{j}]"), rate)?;
                if i != j && rate < 0.0 {
                    return Err(ConfigError::invalid(
                        format!("aversion.Q[{i}][{j}]"),
                        format!("off-diagonal rate must be >= 0, got {rate}"),
                    ));
                }
                sum += rate;
            }
            if sum.abs() > ROW_SUM_TOL {
                return Err(ConfigError::invalid(
                    "aversion.Q",
                    format!("Q row sum of row {i} is {sum:e}, must be 0"),
                ));
            }
        }
        let total: f64 = self.p0.iter().sum();
        if (total - 1.0).abs() > ROW_SUM_TOL {
            return Err(ConfigError::invalid(
                "aversion.p0",
                format!("entries sum to {total}, must be 1"),
            ));
        }
        Ok(())
    }
}

impl ModelConfig {
    pub fn n_states(&self) -> usize {
        self.aversion.n_states()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.market.validate()?;
        self.aversion.validate()?;
        let n = self.n_states();

        let s = &self.schedule;
        check_positive("schedule.T", s.horizon)?;
        for (k, &t) in s.times.iter().enumerate() {
            check_finite(&format!("schedule.times[{k}]"), t)?;
            if !(t > 0.0 && t < s.horizon) {
                return Err(ConfigError::invalid(
                    format!("schedule.times[{k}]"),
                    format!("{t} not in (0, T={})", s.horizon),
                ));
            }
            if k > 0 && t <= s.times[k - 1] {
                return Err(ConfigError::invalid(
                    format!("schedule.times[{k}]"),
                    "trade times must be strictly increasing",
                ));
            }
        }
        if let Some(q) = &s.quantities {
            if q.len() != s.times.len() {
                return Err(ConfigError::invalid(
                    "schedule.quantities",
                    format!("length {} != number of trade times {}", q.len(), s.times.len()),
                ));
            }
            for (k, &x) in q.iter().enumerate() {
                check_finite(&format!("schedule.quantities[{k}]"), x)?;
            }
        }
        if let Some(x0) = s.xi0 {
            check_finite("schedule.xi0", x0)?;
        }
        match self.mode {
            Mode::Partial => {
                if s.quantities.is_none() {
                    return Err(ConfigError::invalid(
                        "schedule.quantities",
                        "required in partial mode",
                    ));
                }
            }
            Mode::Overall => {
                if s.xi0.is_none() {
                    return Err(ConfigError::invalid("schedule.xi0", "required in overall mode"));
                }
                if s.times.is_empty() && s.xi0 != Some(0.0) {
                    return Err(ConfigError::invalid(
                        "schedule.times",
                        "a nonzero xi0 needs at least one trade time",
                    ));
                }
            }
        }
        validate_schedule_feasibility(self)?;

        let p = &self.population;
        if p.e0.len() != n {
            return Err(ConfigError::invalid(
                "population.E0",
                format!("length {} != number of states {n}", p.e0.len()),
            ));
        }
        for (i, &e) in p.e0.iter().enumerate() {
            check_finite(&format!("population.E0[{i}]"), e)?;
        }
        check_nonnegative("population.inventory_bound", p.inventory_bound)?;
        let max_e0 = p.e0.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
        if p.inventory_bound < max_e0 {
            return Err(ConfigError::invalid(
                "population.inventory_bound",
                format!("{} < max |E0| = {max_e0}", p.inventory_bound),
            ));
        }

        let sv = &self.solver;
        if sv.grid_steps_per_unit_time < MIN_STEPS_PER_UNIT_TIME {
            return Err(ConfigError::invalid(
                "solver.grid_steps_per_unit_time",
                format!("{} < {MIN_STEPS_PER_UNIT_TIME}", sv.grid_steps_per_unit_time),
            ));
        }
        check_positive("solver.shooting_tolerance", sv.shooting_tolerance)?;
        Ok(())
    }

    /// LT quantities in partial mode, or the user-fixed ones in overall mode.
    pub fn quantities(&self) -> Option<&[f64]> {
        self.schedule.quantities.as_deref()
    }

    /// The position being liquidated; in partial mode without `xi0` it is
    /// implied by the schedule as `-sum(xi)`.
    pub fn xi0_or_implied(&self, xi: &[f64]) -> f64 {
        self.schedule.xi0.unwrap_or_else(|| -xi.iter().sum::<f64>())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Short stable digest of the canonical JSON form.
    pub fn hash_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// In overall mode with user-fixed quantities, the schedule must liquidate
/// exactly `xi0`. Partial mode places no constraint on the sum.
pub fn validate_schedule_feasibility(cfg: &ModelConfig) -> Result<(), ConfigError> {
    if cfg.mode != Mode::Overall {
        return Ok(());
    }
    let (Some(xi0), Some(q)) = (cfg.schedule.xi0, cfg.schedule.quantities.as_ref()) else {
        return Ok(());
    };
    let residual = xi0 + q.iter().sum::<f64>();
    if residual.abs() > FEASIBILITY_TOL {
        return Err(ConfigError::Infeasible { residual });
    }
    Ok(())
}

/// Built-in parameter sets.
pub mod presets {
    use super::*;

    /// Market parameters of the reference numerical study.
    pub fn baseline_market() -> MarketParams {
        MarketParams {
            gamma: 1.0,
            gamma_h: 0.7,
            lambda: 0.4,
            lambda_h: 0.1,
            eta: 0.05,
            eta0: 0.05,
            sigma: 0.0,
            p0: 0.0,
        }
    }

    /// Nine unit purchases at t = 0.1, ..., 0.9 over [0, 1].
    pub fn baseline_times() -> Vec<f64> {
        (1..=9).map(|k| k as f64 / 10.0).collect()
    }

    pub fn solver(steps: usize) -> SolverSettings {
        SolverSettings {
            grid_steps_per_unit_time: steps,
            integrator: Integrator::Rk4,
            shooting_tolerance: 1e-6,
        }
    }

    /// Partial-mode baseline with the given aversion structure.
    pub fn partial(aversion: AversionSpec) -> ModelConfig {
        let n = aversion.n_states();
        ModelConfig {
            market: baseline_market(),
            aversion,
            schedule: LtSchedule {
                horizon: 1.0,
                times: baseline_times(),
                quantities: Some(vec![1.0; 9]),
                xi0: None,
            },
            population: PopulationInit {
                e0: vec![0.0; n],
                inventory_bound: 1.0,
            },
            solver: solver(10_000),
            mode: Mode::Partial,
            conventions: Conventions::default(),
        }
    }

    /// Overall-mode baseline liquidating `xi0 = -9` at nine dates.
    pub fn overall(aversion: AversionSpec) -> ModelConfig {
        let mut cfg = partial(aversion);
        cfg.mode = Mode::Overall;
        cfg.schedule.quantities = None;
        cfg.schedule.xi0 = Some(-9.0);
        cfg
    }

    pub fn partial_n1(terminal: f64, phi: f64) -> ModelConfig {
        partial(AversionSpec::single(terminal, phi))
    }

    pub fn overall_n1(terminal: f64, phi: f64) -> ModelConfig {
        overall(AversionSpec::single(terminal, phi))
    }

    /// Two-state population: one state inventory-neutral, the other averse to
    /// running (phi = 10) and terminal (Gamma = 2) positions.
    pub fn two_state_partial(x: f64, y: f64) -> ModelConfig {
        partial(AversionSpec::two_state([0.0, 2.0], [0.0, 10.0], x, y))
    }
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;

    const BASELINE_JSON: &str = r#"{
        "market": {"gamma": 1, "gammaH": 0.7, "lambda": 0.4, "lambdaH": 0.1,
                   "eta": 0.05, "eta0": 0.05, "sigma": 0},
        "aversion": {"Gamma": [2], "phi": [0], "Q": [[0]], "p0": [1]},
        "schedule": {"T": 1, "times": [0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9],
                     "quantities": [1,1,1,1,1,1,1,1,1]},
        "population": {"E0": [0], "inventory_bound": 1},
        "solver": {"grid_steps_per_unit_time": 10000, "integrator": "rk4",
                   "shooting_tolerance": 1e-6},
        "mode": "partial"
    }"#;

    #[test]
    fn baseline_file_is_valid() {
        let cfg = from_json_str(BASELINE_JSON).unwrap();
        assert_eq!(cfg.market.gamma_h, 0.7);
        assert_eq!(cfg.schedule.n_trades(), 9);
        assert_eq!(cfg, partial_n1(2.0, 0.0));
    }

    #[test]
    fn q_row_sum_violation_is_named() {
        let mut cfg = two_state_partial(0.5, 0.5);
        cfg.aversion.q = vec![vec![-0.5, 0.4], vec![0.5, -0.5]];
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("Q row sum"), "{err}");
        assert!(err.contains("aversion.Q"), "{err}");
    }

    #[test]
    fn overall_without_quantities_is_valid() {
        let cfg = overall_n1(0.0, 0.0);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.schedule.xi0, Some(-9.0));
        assert!(cfg.quantities().is_none());
    }

    #[test]
    fn feasibility_checks() {
        let mut cfg = overall_n1(0.0, 0.0);
        cfg.schedule.quantities = Some(vec![1.0; 9]);
        assert!(validate_schedule_feasibility(&cfg).is_ok());

        cfg.schedule.quantities = Some(vec![1.0; 8]);
        match validate_schedule_feasibility(&cfg) {
            Err(ConfigError::Infeasible { residual }) => assert_eq!(residual.abs(), 1.0),
            other => panic!("expected infeasibility, got {other:?}"),
        }

        cfg.schedule.times.clear();
        cfg.schedule.quantities = Some(vec![]);
        cfg.schedule.xi0 = Some(0.0);
        assert!(validate_schedule_feasibility(&cfg).is_ok());
        assert!(cfg.validate().is_ok());

        let mut partial = partial_n1(0.0, 0.0);
        partial.schedule.quantities = Some(vec![1.0; 9]);
        partial.schedule.xi0 = Some(-3.0);
        assert!(validate_schedule_feasibility(&partial).is_ok());
    }

    #[test]
    fn invariant_violations_name_fields() {
        let cases: Vec<(fn(&mut ModelConfig), &str)> = vec![
            (|c| c.market.gamma = 0.0, "market.gamma"),
            (|c| c.market.sigma = -1.0, "market.sigma"),
            (|c| c.aversion.p0 = vec![0.7], "aversion.p0"),
            (|c| c.aversion.terminal = vec![-1.0], "aversion.Gamma[0]"),
            (|c| c.schedule.times[3] = 0.25, "schedule.times[3]"),
            (|c| c.schedule.times[8] = 1.0, "schedule.times[8]"),
            (|c| c.population.inventory_bound = -0.5, "population.inventory_bound"),
            (|c| c.population.e0 = vec![2.0], "population.inventory_bound"),
            (|c| c.solver.grid_steps_per_unit_time = 50, "solver.grid_steps_per_unit_time"),
            (|c| c.schedule.quantities = None, "schedule.quantities"),
        ];
        for (mutate, field) in cases {
            let mut cfg = partial_n1(1.0, 1.0);
            mutate(&mut cfg);
            let err = cfg.validate().unwrap_err();
            assert!(err.to_string().contains(field), "{field}: {err}");
        }
    }

    #[test]
    fn negative_off_diagonal_rejected() {
        let mut cfg = two_state_partial(0.5, 0.5);
        cfg.aversion.q = vec![vec![0.1, -0.1], vec![0.5, -0.5]];
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("aversion.Q[0][1]"), "{err}");
    }

    #[test]
    fn unknown_keys_and_bad_json_fail_to_parse() {
        assert!(matches!(from_json_str("{ not json"), Err(ConfigError::Parse(_))));
        let extra = BASELINE_JSON.replacen("\"mode\"", "\"bogus\": 1, \"mode\"", 1);
        assert!(matches!(from_json_str(&extra), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn overrides_patch_nested_keys() {
        let mut value: Value = serde_json::from_str(BASELINE_JSON).unwrap();
        let env = vec![
            ("HFTMFG_MARKET__GAMMAH".to_string(), "0.9".to_string()),
            ("HFTMFG_SOLVER__INTEGRATOR".to_string(), "euler".to_string()),
            ("OTHER_MARKET__GAMMA".to_string(), "5".to_string()),
        ];
        apply_overrides(&mut value, "HFTMFG_", env).unwrap();
        let cfg = from_value(value).unwrap();
        assert_eq!(cfg.market.gamma_h, 0.9);
        assert_eq!(cfg.market.gamma, 1.0);
        assert_eq!(cfg.solver.integrator, Integrator::Euler);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = partial_n1(2.0, 0.0);
        let mut b = a.clone();
        assert_eq!(a.hash_hex(), b.hash_hex());
        b.market.gamma = 1.5;
        assert_ne!(a.hash_hex(), b.hash_hex());
        assert_eq!(a.hash_hex().len(), 16);
    }
}
