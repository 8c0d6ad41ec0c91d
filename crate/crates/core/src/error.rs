use thiserror::Error;

/// Errors raised by the channel model, the protocol state machines and the
/// analysis routines. Most variants signal a broken contract between the
/// orchestrator and an agent rather than a recoverable condition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("system has {users} users but {agents} agents were supplied")]
    AgentCountMismatch { users: usize, agents: usize },

    #[error("at least one user is required")]
    NoUsers,

    #[error("user {user} transmitted from an empty queue at slot {time}")]
    EmptyQueueTransmission { user: usize, time: u64 },

    #[error("collision feedback at slot {time} in a collision-free protocol")]
    UnexpectedCollision { time: u64 },

    #[error("common bound for user {user} reached {bound} after {slots} slots")]
    BoundOverflow { user: usize, bound: u64, slots: u64 },

    #[error("agent replicas of the common bounds diverged")]
    ReplicaDivergence,

    #[error("arrival rate {rate} for user {user} is outside [0, 1]")]
    InvalidRate { user: usize, rate: f64 },

    #[error("total arrival rate must be below 1 for this operation (got {total})")]
    Unsupportable { total: f64 },

    #[error("operation requires at least {required} users, got {got}")]
    TooFewUsers { required: usize, got: usize },

    #[error("feedback {feedback} has zero probability under the current belief of user {user}")]
    ImpossibleObservation { feedback: char, user: usize },

    #[error("enumeration limit exceeded: {what} = {got} (max {max})")]
    EnumerationLimit { what: &'static str, got: usize, max: usize },

    #[error("trajectory was produced by {protocol}, but this check applies only to cima")]
    WrongProtocol { protocol: String },

    #[error("trajectory records a success with an empty system at slot {time}")]
    InconsistentTrajectory { time: usize },

    #[error("grid cap {cap} is below the required minimum {min}")]
    GridTooSmall { cap: u64, min: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
