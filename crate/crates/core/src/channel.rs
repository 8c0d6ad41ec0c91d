//! Slotted collision channel: feedback, Bernoulli arrivals, queue dynamics
//! and the slot orchestrator that drives a set of decentralized agents.
//!
//! Slot order is fixed: decisions, channel resolution, feedback broadcast,
//! arrivals, queue update. An arrival at slot `t` lands after the
//! transmission at `t`, so it can be served at `t + 1` at the earliest.

use std::fmt;
use std::ops::Deref;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamKind};

/// Ternary channel outcome broadcast to every user at the end of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feedback {
    Idle,
    Success,
    Collision,
}

impl Feedback {
    /// Symbol in the `{0, 1, e}` alphabet.
    pub fn symbol(self) -> char {
        match self {
            Feedback::Idle => '0',
            Feedback::Success => '1',
            Feedback::Collision => 'e',
        }
    }
}

impl fmt::Display for Feedback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Per-user Bernoulli arrival probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalRates {
    rates: Vec<f64>,
}

impl ArrivalRates {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::NoUsers);
        }
        for (user, &rate) in rates.iter().enumerate() {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidRate { user, rate });
            }
        }
        Ok(Self { rates })
    }

    pub fn symmetric(users: usize, total: f64) -> Result<Self> {
        if users == 0 {
            return Err(Error::NoUsers);
        }
        Self::new(vec![total / users as f64; users])
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.rates.iter().sum()
    }

    /// Membership in the throughput region (total rate strictly below one).
    pub fn supportable(&self) -> bool {
        self.total() < 1.0
    }
}

/// Backlog of every user, in packets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct QueueVector(Vec<u64>);

impl QueueVector {
    pub fn empty(users: usize) -> Self {
        Self(vec![0; users])
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<u64> {
        self.0
    }
}

impl From<Vec<u64>> for QueueVector {
    fn from(lengths: Vec<u64>) -> Self {
        Self(lengths)
    }
}

impl Deref for QueueVector {
    type Target = [u64];

    fn deref(&self) -> &[u64] {
        &self.0
    }
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotRecord {
    pub time: u64,
    pub decisions: Vec<bool>,
    pub feedback: Feedback,
    pub transmitter: Option<usize>,
    pub arrivals: Vec<bool>,
    pub queues_before: QueueVector,
    pub queues_after: QueueVector,
}

/// Classifies a decision vector into channel feedback.
///
/// Returns the transmitting user only for [`Feedback::Success`].
pub fn resolve_slot(decisions: &[bool]) -> (Feedback, Option<usize>) {
    let mut transmitter = None;
    for (user, &sent) in decisions.iter().enumerate() {
        if sent {
            if transmitter.is_some() {
                return (Feedback::Collision, None);
            }
            transmitter = Some(user);
        }
    }
    match transmitter {
        None => (Feedback::Idle, None),
        Some(user) => (Feedback::Success, Some(user)),
    }
}

/// One step of the queue recursion `Q' = A + (Q - served)^+`, where a user is
/// served iff it is the only transmitter.
pub fn apply_dynamics(queues: &QueueVector, decisions: &[bool], arrivals: &[bool]) -> Result<QueueVector> {
    let n = queues.len();
    for len in [decisions.len(), arrivals.len()] {
        if len != n {
            return Err(Error::LengthMismatch { expected: n, got: len });
        }
    }
    let (_, served) = resolve_slot(decisions);
    let next = queues
        .iter()
        .zip(arrivals)
        .enumerate()
        .map(|(user, (&q, &arrived))| {
            let after_service = if served == Some(user) { q.saturating_sub(1) } else { q };
            after_service + u64::from(arrived)
        })
        .collect();
    Ok(QueueVector(next))
}

/// Source of per-slot arrival bits.
pub trait ArrivalSource {
    fn users(&self) -> usize;

    /// Fills `out` with this slot's arrivals.
    fn sample(&mut self, out: &mut [bool]);
}

/// Independent Bernoulli arrivals, one seeded stream per user.
#[derive(Debug, Clone)]
pub struct BernoulliArrivals {
    rates: ArrivalRates,
    streams: Vec<ChaCha8Rng>,
}

impl BernoulliArrivals {
    pub fn new(rates: ArrivalRates, seed: u64) -> Self {
        let streams = (0..rates.len())
            .map(|user| stream_rng(seed, StreamKind::Arrivals, user))
            .collect();
        Self { rates, streams }
    }

    pub fn rates(&self) -> &ArrivalRates {
        &self.rates
    }
}

impl ArrivalSource for BernoulliArrivals {
    fn users(&self) -> usize {
        self.rates.len()
    }

    fn sample(&mut self, out: &mut [bool]) {
        for ((bit, rng), &rate) in out.iter_mut().zip(&mut self.streams).zip(self.rates.rates()) {
            // A draw is consumed every slot regardless of the rate so that the
            // stream position depends only on the slot index.
            *bit = rng.gen::<f64>() < rate;
        }
    }
}

/// Replays a fixed arrival script; slots past the end of the script are empty.
#[derive(Debug, Clone)]
pub struct ScriptedArrivals {
    users: usize,
    script: Vec<Vec<bool>>,
    cursor: usize,
}

impl ScriptedArrivals {
    pub fn new(users: usize, script: Vec<Vec<bool>>) -> Result<Self> {
        if let Some(bad) = script.iter().find(|row| row.len() != users) {
            return Err(Error::LengthMismatch { expected: users, got: bad.len() });
        }
        Ok(Self { users, script, cursor: 0 })
    }
}

impl ArrivalSource for ScriptedArrivals {
    fn users(&self) -> usize {
        self.users
    }

    fn sample(&mut self, out: &mut [bool]) {
        match self.script.get(self.cursor) {
            Some(row) => out.copy_from_slice(row),
            None => out.fill(false),
        }
        self.cursor += 1;
    }
}

/// A decentralized transmission policy for one user.
///
/// The orchestrator only ever hands an agent the broadcast feedback and the
/// agent's own arrival bit. Queue lengths of other users never cross this
/// interface.
pub trait Agent {
    /// Transmission decision for the current slot.
    fn decide(&mut self) -> bool;

    /// End-of-slot update with the common feedback and this user's arrival.
    fn on_feedback(&mut self, feedback: Feedback, arrival: bool) -> Result<()>;

    /// The agent's own view of its backlog.
    fn local_queue(&self) -> u64;

    /// Replica of the common bound vector, for protocols that keep one.
    /// Used for auditing only.
    fn common_bounds(&self) -> Option<&[u64]> {
        None
    }
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn decide(&mut self) -> bool {
        (**self).decide()
    }

    fn on_feedback(&mut self, feedback: Feedback, arrival: bool) -> Result<()> {
        (**self).on_feedback(feedback, arrival)
    }

    fn local_queue(&self) -> u64 {
        (**self).local_queue()
    }

    fn common_bounds(&self) -> Option<&[u64]> {
        (**self).common_bounds()
    }
}

/// The system state of one run: agents, true queues and the arrival source.
pub struct Simulation<A, S> {
    agents: Vec<A>,
    queues: QueueVector,
    arrivals: S,
    time: u64,
    decisions: Vec<bool>,
    arrival_bits: Vec<bool>,
}

impl<A: Agent, S: ArrivalSource> Simulation<A, S> {
    pub fn new(agents: Vec<A>, arrivals: S) -> Result<Self> {
        let users = arrivals.users();
        if users == 0 {
            return Err(Error::NoUsers);
        }
        if agents.len() != users {
            return Err(Error::AgentCountMismatch { users, agents: agents.len() });
        }
        Ok(Self {
            agents,
            queues: QueueVector::empty(users),
            arrivals,
            time: 0,
            decisions: vec![false; users],
            arrival_bits: vec![false; users],
        })
    }

    /// Starts from a non-empty backlog. Intended for unit tests; agents must
    /// be constructed with matching local queues.
    pub fn with_initial_queues(mut self, queues: QueueVector) -> Result<Self> {
        if queues.len() != self.agents.len() {
            return Err(Error::LengthMismatch { expected: self.agents.len(), got: queues.len() });
        }
        self.queues = queues;
        Ok(self)
    }

    pub fn users(&self) -> usize {
        self.agents.len()
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn queues(&self) -> &QueueVector {
        &self.queues
    }

    pub fn agents(&self) -> &[A] {
        &self.agents
    }

    /// Runs one slot and returns its record.
    pub fn run_slot(&mut self) -> Result<SlotRecord> {
        let time = self.time;
        for (user, (agent, decision)) in self.agents.iter_mut().zip(&mut self.decisions).enumerate() {
            *decision = agent.decide();
            if *decision && self.queues[user] == 0 {
                return Err(Error::EmptyQueueTransmission { user, time });
            }
        }
        let (feedback, transmitter) = resolve_slot(&self.decisions);
        self.arrivals.sample(&mut self.arrival_bits);
        for (agent, &arrival) in self.agents.iter_mut().zip(&self.arrival_bits) {
            agent.on_feedback(feedback, arrival)?;
        }
        let queues_after = apply_dynamics(&self.queues, &self.decisions, &self.arrival_bits)?;
        let queues_before = std::mem::replace(&mut self.queues, queues_after.clone());
        self.time += 1;
        Ok(SlotRecord {
            time,
            decisions: self.decisions.clone(),
            feedback,
            transmitter,
            arrivals: self.arrival_bits.clone(),
            queues_before,
            queues_after,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_slot_examples() {
        assert_eq!(resolve_slot(&[false, false, false]), (Feedback::Idle, None));
        assert_eq!(resolve_slot(&[false, true, false]), (Feedback::Success, Some(1)));
        assert_eq!(resolve_slot(&[true, true, false]), (Feedback::Collision, None));
    }

    #[test]
    fn feedback_classification_is_exhaustive_up_to_ten_users() {
        for n in 1..=10usize {
            for mask in 0u32..(1 << n) {
                let decisions: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                let expected = match mask.count_ones() {
                    0 => (Feedback::Idle, None),
                    1 => (Feedback::Success, Some(mask.trailing_zeros() as usize)),
                    _ => (Feedback::Collision, None),
                };
                assert_eq!(resolve_slot(&decisions), expected, "mask {mask:b}");
            }
        }
    }

    #[test]
    fn apply_dynamics_examples() {
        let q = QueueVector::from(vec![2, 0, 1]);
        let next = apply_dynamics(&q, &[true, false, false], &[false, true, false]).unwrap();
        assert_eq!(&*next, &[1, 1, 1]);

        let q = QueueVector::from(vec![2, 3]);
        let next = apply_dynamics(&q, &[true, true], &[false, false]).unwrap();
        assert_eq!(&*next, &[2, 3]);

        let q = QueueVector::from(vec![0, 0]);
        let next = apply_dynamics(&q, &[false, false], &[true, true]).unwrap();
        assert_eq!(&*next, &[1, 1]);
    }

    #[test]
    fn apply_dynamics_clamps_service_of_empty_queue() {
        let q = QueueVector::from(vec![0, 4]);
        let next = apply_dynamics(&q, &[true, false], &[false, false]).unwrap();
        assert_eq!(&*next, &[0, 4]);
    }

    #[test]
    fn apply_dynamics_rejects_length_mismatch() {
        let q = QueueVector::from(vec![1, 1]);
        let err = apply_dynamics(&q, &[true], &[false, false]).unwrap_err();
        assert_eq!(err, Error::LengthMismatch { expected: 2, got: 1 });
        let err = apply_dynamics(&q, &[true, false], &[false, false, true]).unwrap_err();
        assert_eq!(err, Error::LengthMismatch { expected: 2, got: 3 });
    }

    #[test]
    fn degenerate_rates_give_constant_arrivals() {
        let mut zeros = BernoulliArrivals::new(ArrivalRates::new(vec![0.0; 4]).unwrap(), 1);
        let mut ones = BernoulliArrivals::new(ArrivalRates::new(vec![1.0; 4]).unwrap(), 1);
        let mut out = vec![false; 4];
        for _ in 0..1000 {
            zeros.sample(&mut out);
            assert!(out.iter().all(|&b| !b));
            ones.sample(&mut out);
            assert!(out.iter().all(|&b| b));
        }
    }

    #[test]
    fn half_rate_empirical_mean() {
        let mut source = BernoulliArrivals::new(ArrivalRates::new(vec![0.5, 0.5]).unwrap(), 2024);
        let mut out = vec![false; 2];
        let mut counts = [0u64; 2];
        let slots = 100_000;
        for _ in 0..slots {
            source.sample(&mut out);
            for (c, &b) in counts.iter_mut().zip(&out) {
                *c += u64::from(b);
            }
        }
        for c in counts {
            let mean = c as f64 / slots as f64;
            assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        }
    }

    #[test]
    fn arrivals_reproduce_for_same_seed() {
        let rates = ArrivalRates::new(vec![0.3, 0.7, 0.1]).unwrap();
        let mut a = BernoulliArrivals::new(rates.clone(), 99);
        let mut b = BernoulliArrivals::new(rates, 99);
        let (mut x, mut y) = (vec![false; 3], vec![false; 3]);
        for _ in 0..5000 {
            a.sample(&mut x);
            b.sample(&mut y);
            assert_eq!(x, y);
        }
    }

    #[test]
    fn arrival_rates_validation() {
        assert!(ArrivalRates::new(vec![]).is_err());
        assert!(matches!(
            ArrivalRates::new(vec![0.2, 1.2]),
            Err(Error::InvalidRate { user: 1, .. })
        ));
        let r = ArrivalRates::new(vec![0.6, 0.6]).unwrap();
        assert!(!r.supportable());
        assert!(ArrivalRates::new(vec![0.3, 0.3]).unwrap().supportable());
    }
}
