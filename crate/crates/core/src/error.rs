use thiserror::Error;

/// Invalid physical parameter or function argument.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must be strictly positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
    #[error("screening parameter beta_L = {beta_l:.4} must exceed 1 for a double-well regime")]
    NoDoubleWell { beta_l: f64 },
    #[error("{0}")]
    Invalid(String),
}

impl ParamError {
    pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64, ParamError> {
        if !value.is_finite() {
            Err(ParamError::NotFinite { name, value })
        } else if value <= 0.0 {
            Err(ParamError::NotPositive { name, value })
        } else {
            Ok(value)
        }
    }

    pub(crate) fn non_negative(name: &'static str, value: f64) -> Result<f64, ParamError> {
        if !value.is_finite() {
            Err(ParamError::NotFinite { name, value })
        } else if value < 0.0 {
            Err(ParamError::Negative { name, value })
        } else {
            Ok(value)
        }
    }
}

/// Errors raised while preparing or integrating a transient run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid parameter: {0}")]
    Param(#[from] ParamError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("integration failure at t = {time:e} s: {variable} became {value}")]
    Integration {
        time: f64,
        variable: &'static str,
        value: f64,
    },
    #[error("ambiguous outcome: tail average {average:.4} rad is inside +/-{floor:.4} rad")]
    Ambiguous { average: f64, floor: f64 },
    #[error("all {n_reps} repetitions were ambiguous")]
    AllAmbiguous { n_reps: usize },
}

/// Gray-zone fitting failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {needed} valid points, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("curve has no transition to fit")]
    NoTransition,
    #[error("fit did not converge from any start")]
    NoConvergence,
}

/// Timing-budget violations in the flux bias driver model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FbdError {
    #[error("invalid parameter: {0}")]
    Param(#[from] ParamError),
    #[error("set/reset cycle lasts {duration:e} s, budget is {budget:e} s")]
    Timing { duration: f64, budget: f64 },
}

/// Problems with an experiment configuration file or override.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid override `{spec}`: {message}")]
    Override { spec: String, message: String },
    #[error("invalid value for `{path}`: {message}")]
    Invalid { path: String, message: String },
}

/// Fatal failures while running an experiment.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

/// Failures while rendering a result table.
#[derive(Debug, Error)]
pub enum PlotError {
    #[error("table has no data rows")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("no chart for columns `{0}`")]
    UnknownLayout(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}
