use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite derivative at t = {t}")]
    NonFiniteDerivative { t: f64 },
    #[error("state component {component} diverged to {value:e} at t = {t}")]
    Diverged { t: f64, component: usize, value: f64 },
    #[error("unknown trace channel `{0}`")]
    UnknownChannel(String),
    #[error("empty quadrature window [{ta}, {tb}]")]
    EmptyWindow { ta: f64, tb: f64 },
    #[error("window [{ta}, {tb}] lies outside the trace span [{start}, {end}]")]
    WindowOutOfRange { ta: f64, tb: f64, start: f64, end: f64 },
    #[error("trace too short: {len} samples, need at least {needed}")]
    TraceTooShort { len: usize, needed: usize },
    #[error("trace span {span} is shorter than the excitation window {window}")]
    InsufficientSpan { span: f64, window: f64 },
    #[error("control is singular at t = {t}: |L_g psi| = {value:e}")]
    SingularControl { t: f64, value: f64 },
    #[error("invalid gain matrix: {0}")]
    InvalidGain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("growth-bound grid is degenerate: every tuple was filtered out")]
    DegenerateGrid,
    #[error("function depends on x2[{component}] (|d/dx| = {magnitude:e}); single-component quadrature does not apply")]
    DependenceViolation { component: usize, magnitude: f64 },
    #[error("slip {0} outside [0, 1)")]
    SlipOutOfRange(f64),
    #[error("vehicle stopped: x1 = {x1} <= {threshold}")]
    StoppedVehicle { x1: f64, threshold: f64 },
    #[error("run was not terminated by its stop condition")]
    NotTerminated,
    #[error("config error at {}, key `{key}`: {message}", config_location(*line))]
    Config { line: usize, key: String, message: String },
    #[error("preflight failed: {0}")]
    PreflightFailed(String),
    #[error("io error: {0}")]
    Io(String),
}

fn config_location(line: usize) -> String {
    match line {
        0 => "command line".to_string(),
        n => format!("line {n}"),
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
