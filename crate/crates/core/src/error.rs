use thiserror::Error;

use crate::channel::Node;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("elevation angle undefined (dz = {dz} m, horizontal = {horizontal} m)")]
    UndefinedAngle { dz: f64, horizontal: f64 },

    #[error("position is {offset} m off the active segment")]
    OffSegment { offset: f64 },

    #[error("link distance {distance} m is below the 1 m reference distance")]
    TooClose { distance: f64 },

    #[error("gain table has no entry for {tx:?} -> {rx:?} on subchannel {subchannel}")]
    MissingGain { tx: Node, rx: Node, subchannel: usize },

    #[error("task {task}: feasible sensing region is empty")]
    InfeasibleTask { task: usize },

    #[error("task {task}: UAV is outside the feasible sensing region")]
    OutOfRegion { task: usize },

    #[error("task {task}: sensing requires an active task (state is {state})")]
    TaskNotActive { task: usize, state: &'static str },

    #[error("no relay available for UAV {requester}")]
    NoRelayAvailable { requester: usize },

    #[error("rate {best} bit/s at the best reachable point is below the required {required} bit/s")]
    UnreachableQos { best: f64, required: f64 },

    #[error("minimum deadline speed {v_floor} m/s violates the rate constraint")]
    DeadlineQosConflict { v_floor: f64 },

    #[error("no power vector satisfies the rate constraints (best min slack {slack})")]
    InfeasibleStart { slack: f64 },

    #[error("search budget of {limit} exceeded")]
    BudgetExceeded { limit: u64 },

    #[error("invalid scenario: `{key}`: {reason}")]
    Validation { key: String, reason: String },

    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("slot {slot}: {source}")]
    Slot {
        slot: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} runs failed")]
    RunsFailed { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn validation(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn at_slot(self, slot: u64) -> Self {
        match self {
            e @ Error::Slot { .. } => e,
            e => Error::Slot {
                slot,
                source: Box::new(e),
            },
        }
    }

    /// Process exit code: 1 validation, 3 budget, 2 everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } | Error::Parse(_) => 1,
            Error::BudgetExceeded { .. } => 3,
            Error::Slot { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
