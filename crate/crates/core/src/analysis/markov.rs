//! The joint state `Y_t = (Q_t, B_t)` and its one-step transition.
//!
//! Under CIMA the feedback in a slot is itself a function of `Y_t` (success
//! iff the selected user has a packet), so `(Y_t, A_t)` determines `Y_{t+1}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{resolve_slot, Agent, ArrivalRates, Feedback, QueueVector};
use crate::cima::{update_bounds, BoundVector, CimaAgent};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamKind};
use crate::runner::build_agents;
use crate::{BernoulliArrivals, ProtocolKind, Simulation};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointState {
    pub queues: QueueVector,
    pub bounds: BoundVector,
}

impl JointState {
    pub fn new(queues: Vec<u64>, bounds: Vec<u64>) -> Result<Self> {
        if queues.len() != bounds.len() {
            return Err(Error::LengthMismatch { expected: queues.len(), got: bounds.len() });
        }
        if queues.is_empty() {
            return Err(Error::NoUsers);
        }
        Ok(Self { queues: queues.into(), bounds: bounds.into() })
    }

    pub fn empty(users: usize) -> Self {
        Self { queues: QueueVector::empty(users), bounds: BoundVector::zeros(users) }
    }

    pub fn users(&self) -> usize {
        self.queues.len()
    }

    pub fn selected(&self) -> usize {
        self.bounds.selected()
    }

    /// Feedback the state produces: success iff the selected user is busy.
    pub fn feedback(&self) -> Feedback {
        if self.queues[self.selected()] > 0 {
            Feedback::Success
        } else {
            Feedback::Idle
        }
    }
}

/// Successor of `state` given this slot's arrivals, computed directly from the
/// queue and bound recursions.
pub fn transition(state: &JointState, arrivals: &[bool]) -> Result<JointState> {
    let users = state.users();
    if arrivals.len() != users {
        return Err(Error::LengthMismatch { expected: users, got: arrivals.len() });
    }
    let v = state.selected();
    let feedback = state.feedback();
    let queues = state
        .queues
        .iter()
        .zip(arrivals)
        .enumerate()
        .map(|(n, (&q, &a))| if n == v { q.saturating_sub(1) } else { q } + u64::from(a))
        .collect::<Vec<_>>();
    Ok(JointState { queues: queues.into(), bounds: update_bounds(&state.bounds, feedback)? })
}

/// Successor computed the long way: one independent agent replica per user,
/// each told only its own queue, a channel resolution and a feedback
/// broadcast.
pub fn transition_via_agents(state: &JointState, arrivals: &[bool]) -> Result<JointState> {
    let users = state.users();
    if arrivals.len() != users {
        return Err(Error::LengthMismatch { expected: users, got: arrivals.len() });
    }
    let slots_seen = state.bounds.iter().copied().max().unwrap_or(0);
    let mut agents: Vec<CimaAgent> = (0..users)
        .map(|n| CimaAgent::from_state(n, state.bounds.clone(), state.queues[n], slots_seen))
        .collect();
    let decisions: Vec<bool> = agents.iter_mut().map(Agent::decide).collect();
    let (feedback, _) = resolve_slot(&decisions);
    for (agent, &a) in agents.iter_mut().zip(arrivals) {
        agent.on_feedback(feedback, a)?;
    }
    let bounds = agents[0].bounds().clone();
    if agents.iter().any(|a| *a.bounds() != bounds) {
        return Err(Error::ReplicaDivergence);
    }
    let queues = agents.iter().map(CimaAgent::queue).collect::<Vec<_>>();
    Ok(JointState { queues: queues.into(), bounds })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterminismReport {
    pub checked: usize,
    /// Sample indices where replays or the two routes disagreed.
    pub replay_mismatches: Vec<usize>,
    /// Sample indices where the successor bounds differ from
    /// `update_bounds(B, success iff q^v > 0)`.
    pub structural_mismatches: Vec<usize>,
}

impl DeterminismReport {
    pub fn passed(&self) -> bool {
        self.replay_mismatches.is_empty() && self.structural_mismatches.is_empty()
    }
}

/// Checks that `(Y_t, A_t)` determines `Y_{t+1}`: two replays of the direct
/// transition and one replay through agent replicas must agree, and the
/// bounds must follow the recursion with feedback read off the state.
pub fn next_state_determinism_check(samples: &[(JointState, Vec<bool>)]) -> Result<DeterminismReport> {
    let mut report = DeterminismReport { checked: samples.len(), ..Default::default() };
    for (i, (state, arrivals)) in samples.iter().enumerate() {
        let first = transition(state, arrivals)?;
        let second = transition(state, arrivals)?;
        let via_agents = transition_via_agents(state, arrivals)?;
        if first != second || first != via_agents {
            report.replay_mismatches.push(i);
        }
        let feedback = if state.queues[state.selected()] > 0 { Feedback::Success } else { Feedback::Idle };
        if via_agents.bounds != update_bounds(&state.bounds, feedback)? {
            report.structural_mismatches.push(i);
        }
    }
    Ok(report)
}

/// Draws `count` (state, arrivals) pairs from states visited by seeded CIMA
/// runs, so every state is reachable. Arrival vectors are fresh Bernoulli
/// draws at the same rates.
pub fn sample_reachable_states(
    rates: &ArrivalRates,
    count: usize,
    run_length: u64,
    seed: u64,
) -> Result<Vec<(JointState, Vec<bool>)>> {
    let users = rates.len();
    let mut picker = stream_rng(seed, StreamKind::Analysis, 0);
    let mut samples = Vec::with_capacity(count);
    let mut run = 0u64;
    while samples.len() < count {
        let agents = build_agents(ProtocolKind::Cima, users, seed.wrapping_add(run))?;
        let arrivals = BernoulliArrivals::new(rates.clone(), seed.wrapping_add(run));
        let mut sim = Simulation::new(agents, arrivals)?;
        let mut bounds = BoundVector::zeros(users);
        let mut queues = QueueVector::empty(users);
        for _ in 0..run_length {
            if samples.len() == count {
                break;
            }
            let state = JointState { queues: queues.clone(), bounds: bounds.clone() };
            let record = sim.run_slot()?;
            if picker.gen_bool(0.25) {
                let draw = rates.rates().iter().map(|&r| picker.gen::<f64>() < r).collect();
                samples.push((state, draw));
            }
            bounds = update_bounds(&bounds, record.feedback)?;
            queues = record.queues_after;
        }
        run += 1;
    }
    Ok(samples)
}
