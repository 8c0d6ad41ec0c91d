//! Executable counterparts of the stability and delay analysis.
//!
//! The Lyapunov/drift computations need `N ≥ 2` (the drift weight `α` divides
//! by `N - 1`). With a single user CIMA serves whenever the queue is non-empty
//! and the metrics below still apply.

pub mod drift;
pub mod markov;
pub mod metrics;
pub mod service;

pub use drift::{
    check_drift_region, enumerated_drift, exact_drift, lyapunov, monte_carlo_drift, DriftCheckOptions, DriftReport,
    GridCoverage, LyapunovParams, McEstimate,
};
pub use markov::{next_state_determinism_check, sample_reachable_states, transition, DeterminismReport, JointState};
pub use metrics::{compute_metrics, compute_metrics_with_burn_in, no_trend_check, TrajectoryMetrics, TrendCheck};
pub use service::{epoch_queue_bound, lemma4_window_check, renewal_epochs, EpochReport, WindowCheck};
