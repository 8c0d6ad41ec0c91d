//! Queue and delay metrics over a finished trajectory.

use std::collections::VecDeque;

use serde::Serialize;

use crate::channel::ArrivalRates;
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMetrics {
    /// Slots averaged over (horizon minus burn-in).
    pub horizon: usize,
    pub total_queue_sum: u64,
    pub success_count: u64,
    /// `(1/T) Σ_t Q^tot_t`.
    pub q_avg: f64,
    /// `q_avg / λ_tot`; `None` when the total rate is zero.
    pub delay_estimate: Option<f64>,
    /// Mean FIFO sojourn of packets that both arrived after burn-in and left
    /// before the horizon.
    pub mean_sojourn: Option<f64>,
    pub completed_packets: u64,
}

pub fn compute_metrics(trajectory: &Trajectory, rates: &ArrivalRates) -> Result<TrajectoryMetrics> {
    compute_metrics_with_burn_in(trajectory, rates, 0)
}

/// Like [`compute_metrics`], ignoring the first `burn_in` slots.
pub fn compute_metrics_with_burn_in(
    trajectory: &Trajectory,
    rates: &ArrivalRates,
    burn_in: usize,
) -> Result<TrajectoryMetrics> {
    if rates.len() != trajectory.users() {
        return Err(Error::LengthMismatch { expected: trajectory.users(), got: rates.len() });
    }
    let horizon = trajectory.horizon();
    if horizon <= burn_in {
        return Err(Error::LengthMismatch { expected: burn_in + 1, got: horizon });
    }
    let window = burn_in..horizon;
    let total_queue_sum: u64 = window.clone().map(|t| trajectory.queue_total(t)).sum();
    let success_count = window.clone().filter(|&t| trajectory.success(t)).count() as u64;
    let slots = window.len();
    let q_avg = total_queue_sum as f64 / slots as f64;
    let total_rate = rates.total();
    let delay_estimate = (total_rate > 0.0).then(|| q_avg / total_rate);

    // A packet arriving in slot a is counted in Q_{a+1}, …, Q_s when served in
    // slot s, so its sojourn is s - a slots.
    let mut fifo: Vec<VecDeque<Option<usize>>> = trajectory
        .initial_queues()
        .iter()
        .map(|&q| std::iter::repeat_n(None, q as usize).collect())
        .collect();
    let (mut sojourn_sum, mut completed) = (0u64, 0u64);
    for t in 0..horizon {
        if let Some(user) = trajectory.served(t) {
            if let Some(Some(arrived)) = fifo[user].pop_front() {
                if arrived >= burn_in {
                    sojourn_sum += (t - arrived) as u64;
                    completed += 1;
                }
            }
        }
        for user in trajectory.arrivals(t) {
            fifo[user].push_back(Some(t));
        }
    }
    let mean_sojourn = (completed > 0).then(|| sojourn_sum as f64 / completed as f64);

    Ok(TrajectoryMetrics {
        horizon: slots,
        total_queue_sum,
        success_count,
        q_avg,
        delay_estimate,
        mean_sojourn,
        completed_packets: completed,
    })
}

/// Finite-horizon stability proxy: the mean backlog over the last quarter
/// must not exceed the mean over the second quarter by more than 10%.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendCheck {
    pub second_quarter_mean: f64,
    pub last_quarter_mean: f64,
    pub stable: bool,
}

pub const TREND_TOLERANCE: f64 = 0.10;

pub fn no_trend_check(trajectory: &Trajectory) -> Result<TrendCheck> {
    let horizon = trajectory.horizon();
    if horizon < 4 {
        return Err(Error::LengthMismatch { expected: 4, got: horizon });
    }
    let quarter = horizon / 4;
    let mean = |range: std::ops::Range<usize>| {
        let len = range.len() as f64;
        range.map(|t| trajectory.queue_total(t) as f64).sum::<f64>() / len
    };
    let second_quarter_mean = mean(quarter..2 * quarter);
    let last_quarter_mean = mean(horizon - quarter..horizon);
    Ok(TrendCheck {
        second_quarter_mean,
        last_quarter_mean,
        stable: last_quarter_mean <= (1.0 + TREND_TOLERANCE) * second_quarter_mean,
    })
}
