//! Compact time-indexed record of a run.
//!
//! Per slot we keep the feedback, the served user and the users that received
//! a packet, plus the total backlog. Full queue vectors are reconstructed on
//! demand by replaying the arrivals and services.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{Feedback, QueueVector, SlotRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Cima,
    Tdma,
    Backoff,
    /// Anything else plugged into the orchestrator (test probes and the like).
    Other,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Cima => "cima",
            ProtocolKind::Tdma => "tdma",
            ProtocolKind::Backoff => "backoff",
            ProtocolKind::Other => "other",
        }
    }

    /// Whether the protocol schedules at most one transmitter per slot.
    pub fn collision_free(self) -> bool {
        matches!(self, ProtocolKind::Cima | ProtocolKind::Tdma)
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cima" => Ok(ProtocolKind::Cima),
            "tdma" => Ok(ProtocolKind::Tdma),
            "backoff" => Ok(ProtocolKind::Backoff),
            other => Err(format!("unknown protocol '{other}' (expected cima, tdma or backoff)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    users: usize,
    protocol: ProtocolKind,
    initial_queues: Vec<u64>,
    feedback: Vec<Feedback>,
    served: Vec<Option<u32>>,
    arrival_offsets: Vec<u32>,
    arrival_users: Vec<u32>,
    /// `queue_totals[t]` is the total backlog at the start of slot `t`; the
    /// last entry is the backlog after the final slot.
    queue_totals: Vec<u64>,
}

impl Trajectory {
    pub fn new(protocol: ProtocolKind, initial_queues: QueueVector) -> Self {
        let total = initial_queues.total();
        Self {
            users: initial_queues.len(),
            protocol,
            initial_queues: initial_queues.into_inner(),
            feedback: Vec::new(),
            served: Vec::new(),
            arrival_offsets: vec![0],
            arrival_users: Vec::new(),
            queue_totals: vec![total],
        }
    }

    pub fn push(&mut self, record: &SlotRecord) -> Result<()> {
        if record.arrivals.len() != self.users {
            return Err(Error::LengthMismatch { expected: self.users, got: record.arrivals.len() });
        }
        let served = record.transmitter.filter(|&u| record.queues_before[u] > 0);
        self.feedback.push(record.feedback);
        self.served.push(served.map(|u| u as u32));
        self.arrival_users.extend(
            record.arrivals.iter().enumerate().filter(|(_, &a)| a).map(|(u, _)| u as u32),
        );
        self.arrival_offsets.push(self.arrival_users.len() as u32);
        self.queue_totals.push(record.queues_after.total());
        Ok(())
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn protocol(&self) -> ProtocolKind {
        self.protocol
    }

    /// Number of slots recorded.
    pub fn horizon(&self) -> usize {
        self.feedback.len()
    }

    pub fn feedback(&self) -> &[Feedback] {
        &self.feedback
    }

    /// User whose packet left the system in slot `t`.
    pub fn served(&self, t: usize) -> Option<usize> {
        self.served[t].map(|u| u as usize)
    }

    /// `Ū_t`: one iff slot `t` carried a successful transmission.
    pub fn success(&self, t: usize) -> bool {
        self.feedback[t] == Feedback::Success
    }

    pub fn arrivals(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        let (lo, hi) = (self.arrival_offsets[t] as usize, self.arrival_offsets[t + 1] as usize);
        self.arrival_users[lo..hi].iter().map(|&u| u as usize)
    }

    /// `Q^tot_t` for `t` in `0..=horizon`.
    pub fn queue_total(&self, t: usize) -> u64 {
        self.queue_totals[t]
    }

    pub fn queue_totals(&self) -> &[u64] {
        &self.queue_totals
    }

    pub fn collisions(&self) -> usize {
        self.feedback.iter().filter(|&&f| f == Feedback::Collision).count()
    }

    pub fn initial_queues(&self) -> &[u64] {
        &self.initial_queues
    }

    /// Per-user queue vectors `Q_0, …, Q_T`, rebuilt by replay.
    pub fn queue_vectors(&self) -> Vec<QueueVector> {
        let mut q = self.initial_queues.clone();
        let mut out = Vec::with_capacity(self.horizon() + 1);
        out.push(QueueVector::from(q.clone()));
        for t in 0..self.horizon() {
            if let Some(u) = self.served(t) {
                q[u] -= 1;
            }
            for u in self.arrivals(t) {
                q[u] += 1;
            }
            out.push(QueueVector::from(q.clone()));
        }
        out
    }

    /// FNV-1a digest of each user's arrival bit sequence, folded in user order.
    /// Two runs with the same master seed and rates give the same digest
    /// whatever protocol they ran.
    pub fn arrival_checksum(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut per_user = vec![OFFSET; self.users];
        for t in 0..self.horizon() {
            for u in self.arrivals(t) {
                for byte in (t as u64).to_le_bytes() {
                    per_user[u] = (per_user[u] ^ u64::from(byte)).wrapping_mul(PRIME);
                }
            }
        }
        per_user.iter().fold(OFFSET, |acc, &h| {
            h.to_le_bytes().iter().fold(acc, |a, &b| (a ^ u64::from(b)).wrapping_mul(PRIME))
        })
    }
}
