//! Seeded runs of a homogeneous protocol with per-slot invariant audits.

use serde::{Deserialize, Serialize};

use crate::baseline::{BackoffAgent, TdmaAgent};
use crate::channel::{Agent, ArrivalRates, ArrivalSource, BernoulliArrivals, Feedback, Simulation, SlotRecord};
use crate::cima::CimaAgent;
use crate::error::{Error, Result};
use crate::trajectory::{ProtocolKind, Trajectory};

pub type BoxedAgent = Box<dyn Agent + Send>;

/// One agent per user for the given protocol. Back-off decision streams are
/// derived from `seed`; the other protocols are deterministic.
pub fn build_agents(kind: ProtocolKind, users: usize, seed: u64) -> Result<Vec<BoxedAgent>> {
    if users == 0 {
        return Err(Error::NoUsers);
    }
    let agents = (0..users)
        .map(|n| -> BoxedAgent {
            match kind {
                ProtocolKind::Cima => Box::new(CimaAgent::new(n, users)),
                ProtocolKind::Tdma => Box::new(TdmaAgent::new(n, users)),
                ProtocolKind::Backoff | ProtocolKind::Other => Box::new(BackoffAgent::new(n, seed)),
            }
        })
        .collect();
    Ok(agents)
}

/// Invariant counters accumulated over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunAudit {
    pub collisions: u64,
    /// Slots in which two agents disagreed on the common bound vector.
    pub replica_mismatches: u64,
    /// (slot, user) pairs with a bound below the true queue.
    pub dominance_violations: u64,
    /// (slot, user) pairs where an agent's own queue view differs from the truth.
    pub local_view_mismatches: u64,
}

impl RunAudit {
    /// Violations that indicate a bug for the given protocol. Collisions are
    /// only a violation for collision-free schedules.
    pub fn violations(&self, kind: ProtocolKind) -> u64 {
        let collisions = if kind.collision_free() { self.collisions } else { 0 };
        collisions + self.replica_mismatches + self.dominance_violations + self.local_view_mismatches
    }

    /// Bound-related violations only.
    pub fn bound_violations(&self) -> u64 {
        self.replica_mismatches + self.dominance_violations
    }

    fn observe<A: Agent>(&mut self, record: &SlotRecord, agents: &[A]) {
        if record.feedback == Feedback::Collision {
            self.collisions += 1;
        }
        for (agent, &q) in agents.iter().zip(record.queues_after.iter()) {
            if agent.local_queue() != q {
                self.local_view_mismatches += 1;
            }
        }
        let Some(first) = agents.first().and_then(|a| a.common_bounds()) else {
            return;
        };
        if agents.iter().skip(1).any(|a| a.common_bounds() != Some(first)) {
            self.replica_mismatches += 1;
        }
        self.dominance_violations +=
            first.iter().zip(record.queues_after.iter()).filter(|(b, q)| b < q).count() as u64;
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub audit: RunAudit,
}

/// Runs `horizon` slots of an already assembled system, recording the
/// trajectory and auditing every slot.
pub fn run_simulation<A: Agent, S: ArrivalSource>(
    sim: &mut Simulation<A, S>,
    protocol: ProtocolKind,
    horizon: u64,
) -> Result<RunOutcome> {
    let mut trajectory = Trajectory::new(protocol, sim.queues().clone());
    let mut audit = RunAudit::default();
    for _ in 0..horizon {
        let record = sim.run_slot()?;
        audit.observe(&record, sim.agents());
        trajectory.push(&record)?;
    }
    Ok(RunOutcome { trajectory, audit })
}

/// Seeded run of `kind` under Bernoulli arrivals from empty queues.
pub fn run_protocol(kind: ProtocolKind, rates: &ArrivalRates, horizon: u64, seed: u64) -> Result<RunOutcome> {
    let agents = build_agents(kind, rates.len(), seed)?;
    let arrivals = BernoulliArrivals::new(rates.clone(), seed);
    let mut sim = Simulation::new(agents, arrivals)?;
    run_simulation(&mut sim, kind, horizon)
}
