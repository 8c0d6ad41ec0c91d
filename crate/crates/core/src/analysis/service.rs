//! Service guarantees along CIMA trajectories.
//!
//! With `q` packets in the system at slot `t`, CIMA completes at least `q`
//! transmissions in the window `[t, t + q + N - 1]`. The renewal epochs
//! `T_1 = N`, `T_k = min{t > T_{k-1} : Σ_{τ=T_{k-1}}^{t-1} Ū_τ = Q^tot_{T_{k-1}}}`
//! therefore satisfy `T_k ≤ T_{k-1} + Q^tot_{T_{k-1}} + N`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trajectory::{ProtocolKind, Trajectory};

fn require_cima(trajectory: &Trajectory) -> Result<()> {
    match trajectory.protocol() {
        ProtocolKind::Cima => Ok(()),
        other => Err(Error::WrongProtocol { protocol: other.to_string() }),
    }
}

/// `prefix[t]` = number of successful slots in `[0, t)`.
fn success_prefix(trajectory: &Trajectory) -> Vec<u64> {
    let mut prefix = Vec::with_capacity(trajectory.horizon() + 1);
    prefix.push(0);
    for t in 0..trajectory.horizon() {
        prefix.push(prefix[t] + u64::from(trajectory.success(t)));
    }
    prefix
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WindowCheck {
    pub windows_checked: usize,
    /// First slot whose window fell short, with the successes counted.
    pub first_violation: Option<(usize, u64)>,
}

impl WindowCheck {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks every window that fits inside the horizon.
pub fn lemma4_window_check(trajectory: &Trajectory) -> Result<WindowCheck> {
    require_cima(trajectory)?;
    let users = trajectory.users() as u64;
    let horizon = trajectory.horizon() as u64;
    let prefix = success_prefix(trajectory);
    let mut check = WindowCheck { windows_checked: 0, first_violation: None };
    for t in 0..trajectory.horizon() {
        let q = trajectory.queue_total(t);
        let last = t as u64 + q + users - 1;
        if last >= horizon {
            continue;
        }
        check.windows_checked += 1;
        let successes = prefix[last as usize + 1] - prefix[t];
        if successes < q {
            check.first_violation = Some((t, successes));
            break;
        }
    }
    Ok(check)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Epoch {
    /// `T_k`.
    pub start: usize,
    /// `Q^tot_{T_k}`.
    pub queue_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    pub epochs: Vec<Epoch>,
    /// Indices `k` (into `epochs`) where `T_k - T_{k-1} > Q^tot_{T_{k-1}} + N`.
    pub bound_violations: Vec<usize>,
    /// Epochs whose end `T_{k+1}` fell inside the horizon.
    pub closed_epochs: usize,
}

impl EpochReport {
    /// The horizon was too short to close a single epoch.
    pub fn partial(&self) -> bool {
        self.closed_epochs == 0
    }

    pub fn mean_queue_total(&self) -> Option<f64> {
        if self.epochs.is_empty() {
            return None;
        }
        let n = self.epochs.len() as f64;
        Some(self.epochs.iter().map(|e| e.queue_total as f64).sum::<f64>() / n)
    }

    pub fn queue_totals(&self) -> impl Iterator<Item = u64> + '_ {
        self.epochs.iter().map(|e| e.queue_total)
    }
}

/// Reference value `λ_tot N / (1 - λ_tot)` for the mean backlog at epochs.
pub fn epoch_queue_bound(total_rate: f64, users: usize) -> f64 {
    total_rate * users as f64 / (1.0 - total_rate)
}

/// Computes the renewal epochs and checks the per-epoch length bound.
pub fn renewal_epochs(trajectory: &Trajectory) -> Result<EpochReport> {
    require_cima(trajectory)?;
    let users = trajectory.users();
    let horizon = trajectory.horizon();
    let prefix = success_prefix(trajectory);
    let mut report = EpochReport { epochs: Vec::new(), bound_violations: Vec::new(), closed_epochs: 0 };
    if users > horizon {
        return Ok(report);
    }
    let mut start = users;
    loop {
        let queue_total = trajectory.queue_total(start);
        report.epochs.push(Epoch { start, queue_total });
        let mut t = start + 1;
        while t <= horizon && prefix[t] - prefix[start] < queue_total {
            t += 1;
        }
        if t > horizon {
            break;
        }
        // The running count grows by at most one per slot, so it first reaches
        // the target exactly unless a success happened in an empty system.
        if prefix[t] - prefix[start] != queue_total {
            return Err(Error::InconsistentTrajectory { time: t - 1 });
        }
        if (t - start) as u64 > queue_total + users as u64 {
            report.bound_violations.push(report.epochs.len());
        }
        report.closed_epochs += 1;
        start = t;
    }
    Ok(report)
}
