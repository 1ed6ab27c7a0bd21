use alloc::string::String;

use thiserror::Error;

/// Errors raised by the risk engine, the predictor and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {what}: {value}")]
    InvalidParameter { what: &'static str, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("probability {value} outside [0, 1] at index {index}")]
    ProbabilityOutOfRange { index: usize, value: f64 },

    #[error("grid shape mismatch: expected {expected} cells, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("window does not match the safety box geometry")]
    WindowMismatch,

    #[error("no surrounding participants")]
    NoParticipants,

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("trajectory times are not uniformly spaced at sample {0}")]
    NonUniformTrajectory(usize),

    #[error("timestep ordering violated: previous t = {prev}, current t = {curr}")]
    TimestepOrder { prev: f64, curr: f64 },

    #[error("no trajectory sample within 1e-6 s of grid time {0}")]
    MisalignedTimestamp(f64),

    #[error("step index must be >= 1")]
    InvalidStepIndex,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("ill-formed road geometry: {0}")]
    Road(String),

    #[error("ill-formed scenario: {0}")]
    Scenario(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
