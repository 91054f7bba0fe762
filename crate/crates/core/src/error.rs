use thiserror::Error;

/// Errors produced by model construction, simulation, and the samplers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("acceptance rate too low: gave up after {attempts} attempts at level {level}")]
    AcceptanceRateTooLow { attempts: u64, level: usize },

    #[error("degenerate weights{}", match .level { Some(l) => format!(" at level {l}"), None => String::new() })]
    DegenerateWeights { level: Option<usize> },

    #[error("time {t} outside trajectory horizon [{t0}, {t1}]")]
    OutOfHorizon { t: f64, t0: f64, t1: f64 },

    #[error("sample allocation failed: {0}")]
    Allocation(String),

    #[error("approximate model carries no usable signal (R0 <= 0); fall back to eta = (1, 1)")]
    ApproximationUseless,

    #[error("unknown benchmark id: {0}")]
    UnknownBenchmark(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("model file parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
