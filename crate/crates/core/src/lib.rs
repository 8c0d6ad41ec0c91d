//! Slotted collision channel simulation with common-information multiple
//! access (CIMA), baseline protocols, an exact belief oracle and executable
//! stability/delay analysis.
//!
//! User indices are 0-based throughout.

pub mod analysis;
pub mod baseline;
pub mod belief;
pub mod channel;
pub mod cima;
pub mod error;
pub mod rng;
pub mod runner;
pub mod scalar;
pub mod trajectory;

pub use channel::{
    apply_dynamics, resolve_slot, Agent, ArrivalRates, ArrivalSource, BernoulliArrivals, Feedback, QueueVector,
    ScriptedArrivals, Simulation, SlotRecord,
};
pub use cima::{select_user, update_bounds, BoundVector, CimaAgent};
pub use error::{Error, Result};
pub use runner::{build_agents, run_protocol, run_simulation, RunAudit, RunOutcome};
pub use scalar::Scalar;
pub use trajectory::{ProtocolKind, Trajectory};
