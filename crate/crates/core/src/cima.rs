//! Common-information multiple access.
//!
//! Every user keeps a replica of the common upper bound vector `B`, the
//! largest backlog of each user that is consistent with the feedback seen so
//! far. The user with the largest bound (smallest index on ties) owns the
//! slot and transmits if it has a packet. Because `B` evolves only through
//! the broadcast feedback, all replicas stay identical and at most one user
//! ever transmits.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::channel::{Agent, Feedback};
use crate::error::{Error, Result};

/// Common upper bounds on the queue lengths, one entry per user.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundVector(Vec<u64>);

impl BoundVector {
    /// All-zero bounds, matching empty initial queues.
    pub fn zeros(users: usize) -> Self {
        Self(vec![0; users])
    }

    pub fn into_inner(self) -> Vec<u64> {
        self.0
    }

    /// Index of the user that owns the next slot.
    pub fn selected(&self) -> usize {
        select_user(&self.0)
    }

    /// In-place form of [`update_bounds`]. Returns the selected user.
    pub fn apply(&mut self, feedback: Feedback) -> Result<usize> {
        let v = self.selected();
        let own = match feedback {
            Feedback::Success => self.0[v],
            Feedback::Idle => 1,
            Feedback::Collision => return Err(Error::UnexpectedCollision { time: u64::MAX }),
        };
        for (user, bound) in self.0.iter_mut().enumerate() {
            if user == v {
                *bound = own;
            } else {
                *bound = bound.checked_add(1).ok_or(Error::BoundOverflow {
                    user,
                    bound: u64::MAX,
                    slots: u64::MAX,
                })?;
            }
        }
        Ok(v)
    }
}

impl From<Vec<u64>> for BoundVector {
    fn from(bounds: Vec<u64>) -> Self {
        Self(bounds)
    }
}

impl Deref for BoundVector {
    type Target = [u64];

    fn deref(&self) -> &[u64] {
        &self.0
    }
}

/// Smallest index among the users holding the largest bound.
///
/// # Panics
/// If `bounds` is empty.
pub fn select_user(bounds: &[u64]) -> usize {
    assert!(!bounds.is_empty(), "select_user needs at least one user");
    let mut best = 0;
    for (user, &b) in bounds.iter().enumerate().skip(1) {
        if b > bounds[best] {
            best = user;
        }
    }
    best
}

/// Bound recursion driven by one feedback symbol.
///
/// Non-selected users grow by one; the selected user keeps its bound after a
/// success and drops to one after an idle slot. Collision cannot happen under
/// this protocol and is rejected.
pub fn update_bounds(bounds: &BoundVector, feedback: Feedback) -> Result<BoundVector> {
    let mut next = bounds.clone();
    next.apply(feedback)?;
    Ok(next)
}

/// One user's protocol state machine.
#[derive(Debug, Clone)]
pub struct CimaAgent {
    index: usize,
    bounds: BoundVector,
    queue: u64,
    selected: Option<usize>,
    slots_seen: u64,
}

impl CimaAgent {
    pub fn new(index: usize, users: usize) -> Self {
        assert!(index < users, "user index {index} out of range for {users} users");
        Self {
            index,
            bounds: BoundVector::zeros(users),
            queue: 0,
            selected: None,
            slots_seen: 0,
        }
    }

    /// Agent restored at an arbitrary point: a known bound replica and own
    /// backlog. Used to replay transitions from sampled states.
    pub fn from_state(index: usize, bounds: BoundVector, queue: u64, slots_seen: u64) -> Self {
        assert!(index < bounds.len(), "user index {index} out of range");
        Self { index, bounds, queue, selected: None, slots_seen }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn bounds(&self) -> &BoundVector {
        &self.bounds
    }

    pub fn queue(&self) -> u64 {
        self.queue
    }
}

impl Agent for CimaAgent {
    fn decide(&mut self) -> bool {
        let v = self.bounds.selected();
        self.selected = Some(v);
        v == self.index && self.queue > 0
    }

    fn on_feedback(&mut self, feedback: Feedback, arrival: bool) -> Result<()> {
        if feedback == Feedback::Collision {
            return Err(Error::UnexpectedCollision { time: self.slots_seen });
        }
        let v = self.selected.take().unwrap_or_else(|| self.bounds.selected());
        let applied = self.bounds.apply(feedback)?;
        debug_assert_eq!(v, applied);
        if v == self.index {
            self.queue = self.queue.saturating_sub(1);
        }
        self.queue += u64::from(arrival);
        self.slots_seen += 1;
        // B^n_t <= t for t >= 1: the bound counts slots since the user was last
        // observed empty.
        if let Some((user, &bound)) = self.bounds.iter().enumerate().find(|(_, &b)| b > self.slots_seen) {
            return Err(Error::BoundOverflow { user, bound, slots: self.slots_seen });
        }
        Ok(())
    }

    fn local_queue(&self) -> u64 {
        self.queue
    }

    fn common_bounds(&self) -> Option<&[u64]> {
        Some(&self.bounds)
    }
}
