use thiserror::Error;

/// Failures while reading or validating a model configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("infeasible LT schedule: xi0 + sum(xi) = {residual:e} (must be 0)")]
    Infeasible { residual: f64 },
    #[error("bad override {key}: {message}")]
    Override { key: String, message: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Numerical failures raised by the solvers.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error("state probability p_{state}(t={time}) = {value:e} fell below the positivity threshold")]
    Positivity { time: f64, state: usize, value: f64 },
    #[error("h2_{state}(t={time}) = {value} left the admissible box [{lower}, 0]; refine the grid")]
    RiccatiBox {
        time: f64,
        state: usize,
        value: f64,
        lower: f64,
    },
    #[error("terminal speed operator is singular (condition number {condition:e})")]
    SingularTerminal { condition: f64 },
    #[error("decoupling field mu = K E + k diverged at t={time}; refine the grid")]
    Decoupling { time: f64 },
    #[error("LT first-order system is singular (condition number {condition:e})")]
    SingularBestResponse { condition: f64 },
    #[error("h1 jump at t_{k} is {observed}, expected {expected}")]
    JumpMismatch { k: usize, observed: f64, expected: f64 },
    #[error("deviation objective is not concave: {0}")]
    NotConcave(String),
    #[error("mode mismatch: {0}")]
    Mode(String),
    #[error("simulated inventory {value} exceeds the a-priori bound {bound}")]
    InventoryBound { value: f64, bound: f64 },
    #[error("trajectory dump of {rows} rows exceeds the {limit}-row guard")]
    DumpTooLarge { rows: usize, limit: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}
