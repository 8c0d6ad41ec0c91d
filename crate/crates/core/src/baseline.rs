//! Comparison protocols sharing the [`Agent`] interface: round-robin TDMA
//! and quadratic back-off.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{Agent, Feedback};
use crate::error::Result;
use crate::rng::{stream_rng, StreamKind};

/// Fixed round-robin ownership: user `n` (0-based) owns slots with
/// `t mod N == n`.
#[derive(Debug, Clone)]
pub struct TdmaAgent {
    index: usize,
    users: usize,
    clock: u64,
    queue: u64,
    transmitted: bool,
}

impl TdmaAgent {
    pub fn new(index: usize, users: usize) -> Self {
        assert!(index < users, "user index {index} out of range for {users} users");
        Self { index, users, clock: 0, queue: 0, transmitted: false }
    }

    /// Agent synchronized to slot `clock` with a given backlog.
    pub fn at(index: usize, users: usize, clock: u64, queue: u64) -> Self {
        Self { clock, queue, ..Self::new(index, users) }
    }

    pub fn owns_slot(&self) -> bool {
        (self.clock % self.users as u64) as usize == self.index
    }
}

impl Agent for TdmaAgent {
    fn decide(&mut self) -> bool {
        self.transmitted = self.owns_slot() && self.queue > 0;
        self.transmitted
    }

    fn on_feedback(&mut self, feedback: Feedback, arrival: bool) -> Result<()> {
        if self.transmitted && feedback == Feedback::Success {
            self.queue -= 1;
        }
        self.queue += u64::from(arrival);
        self.transmitted = false;
        self.clock += 1;
        Ok(())
    }

    fn local_queue(&self) -> u64 {
        self.queue
    }
}

/// Quadratic back-off: with a packet waiting, transmit with probability
/// `(c + 1)^-2` for back-off counter `c`.
///
/// Counter rule: `c += 1` after an own collision, `c = 0` after an own
/// success, unchanged otherwise.
#[derive(Debug, Clone)]
pub struct BackoffAgent {
    index: usize,
    counter: u64,
    queue: u64,
    transmitted: bool,
    rng: ChaCha8Rng,
}

impl BackoffAgent {
    /// Agent whose decision stream is derived from the run's master seed.
    pub fn new(index: usize, seed: u64) -> Self {
        Self::with_rng(index, stream_rng(seed, StreamKind::Decisions, index))
    }

    pub fn with_rng(index: usize, rng: ChaCha8Rng) -> Self {
        Self { index, counter: 0, queue: 0, transmitted: false, rng }
    }

    pub fn with_state(mut self, counter: u64, queue: u64) -> Self {
        self.counter = counter;
        self.queue = queue;
        self
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Transmission probability if the queue is non-empty.
    pub fn attempt_probability(&self) -> f64 {
        let c = self.counter as f64 + 1.0;
        1.0 / (c * c)
    }
}

impl Agent for BackoffAgent {
    fn decide(&mut self) -> bool {
        self.transmitted = self.queue > 0 && self.rng.gen::<f64>() < self.attempt_probability();
        self.transmitted
    }

    fn on_feedback(&mut self, feedback: Feedback, arrival: bool) -> Result<()> {
        if self.transmitted {
            match feedback {
                Feedback::Collision => self.counter += 1,
                Feedback::Success => {
                    self.counter = 0;
                    self.queue -= 1;
                }
                Feedback::Idle => {}
            }
        }
        self.queue += u64::from(arrival);
        self.transmitted = false;
        Ok(())
    }

    fn local_queue(&self) -> u64 {
        self.queue
    }
}
