use thiserror::Error;

use crate::mapping::Policy;

#[derive(Debug, Error)]
pub enum Error {
    #[error("intersection must have at least one lane")]
    NoLanes,
    #[error("lane {0} is listed as conflicting with itself")]
    SelfConflict(usize),
    #[error("lane {lane} has invalid rate {rate} (rates must be finite and >= 0)")]
    NegativeRate { lane: usize, rate: f64 },
    #[error("total arrival rate must be positive")]
    ZeroTotalRate,
    #[error("{name} must be a finite, non-negative number of seconds (got {value})")]
    NegativeGap { name: &'static str, value: f64 },
    #[error("lane {lane} is out of range 1..={lane_count}")]
    LaneOutOfRange { lane: usize, lane_count: usize },
    #[error("expected {expected} lane rates, got {got}")]
    RateCountMismatch { expected: usize, got: usize },
    #[error("operation requires a two-lane intersection (spec has {0} lanes)")]
    NotTwoLane(usize),
    #[error("delay vector has {got} components, intersection has {expected} lanes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("desired times must be strictly increasing (vehicle at position {0} breaks the order)")]
    UnsortedVehicles(usize),
    #[error("vehicle sequence is empty")]
    EmptySequence,
    #[error("equilibrium results do not describe consecutive prefixes: {0}")]
    MismatchedSequences(String),
    #[error("no {policy} region contains T = {delays:?}, x = {gap}")]
    Unclassified {
        policy: Policy,
        delays: Vec<f64>,
        gap: f64,
    },
    #[error("histograms use different binning")]
    BinningMismatch,
    #[error("lambda * delta_d = {0} is outside the supported range (0, 50]")]
    OutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
