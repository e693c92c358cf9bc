use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("task {task} already has a bound execution mode")]
    ModeLocked { task: usize },

    #[error("task {task}: UAV {uav} has no service window at the host station from slot {from_slot} on")]
    InfeasibleMode {
        task: usize,
        uav: usize,
        from_slot: usize,
    },

    #[error("task {task}: allocation at slot {slot} precedes generation slot {gen_slot}")]
    Temporal {
        task: usize,
        slot: usize,
        gen_slot: usize,
    },

    #[error("state error: {0}")]
    State(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("enumeration size {estimate:.3e} exceeds budget {budget:.3e}")]
    Limits { estimate: f64, budget: f64 },

    #[error("retrieval error: {0}")]
    Retrieval(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Input(_)
            | Error::Precondition(_)
            | Error::InfeasibleMode { .. }
            | Error::Limits { .. }
            | Error::Shape { .. } => 3,
            _ => 1,
        }
    }
}
