use thiserror::Error;

use crate::distfit::Family;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {family} parameters: {reason}")]
    InvalidParams { family: Family, reason: String },

    #[error("probability {0} is outside (0, 1)")]
    ProbabilityDomain(f64),

    #[error("no samples")]
    NoSamples,

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("{family} requires {reason}")]
    SampleDomain { family: Family, reason: String },

    #[error("unsupported family {family} for {context}")]
    UnsupportedFamily { family: Family, context: &'static str },

    #[error("Gumbel difference needs equal scales (got {a} and {b}); use difference_numeric instead")]
    UnequalScales { a: f64, b: f64 },

    #[error("grid [{lo}, {hi}] leaves tail mass {tail_mass:e} outside; try [{suggested_lo}, {suggested_hi}]")]
    GridTooNarrow {
        lo: f64,
        hi: f64,
        tail_mass: f64,
        suggested_lo: f64,
        suggested_hi: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trace header must be `station_id,lane_id,upstream_tick,downstream_tick`, found `{0}`")]
    TraceHeader(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
