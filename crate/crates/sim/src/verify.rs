//! The invariant and oracle battery behind `cima-sim verify`.
//!
//! Each check takes a [`Scale`]. [`Scale::full`] uses the acceptance sizes;
//! [`Scale::quick`] shrinks horizons and counts for a fast smoke run.

use std::fmt;

use cima_core::analysis::{
    check_drift_region, lemma4_window_check, next_state_determinism_check, no_trend_check, renewal_epochs,
    sample_reachable_states, DriftCheckOptions, GridCoverage, LyapunovParams,
};
use cima_core::belief::verify_factorization;
use cima_core::{run_protocol, ArrivalRates, ProtocolKind, Scalar};
use num_rational::{BigRational, Ratio};
use rayon::prelude::*;

use crate::config::{pattern_rates, ExperimentConfig, Pattern};
use crate::error::SimError;
use crate::experiment::{mean_and_se, run_experiment};

#[derive(Debug, Clone)]
pub struct Scale {
    pub collision_users: Vec<usize>,
    pub collision_runs: usize,
    pub long_horizon: u64,
    pub belief_horizon: usize,
    pub belief_rational_horizon: usize,
    pub drift_users: Vec<usize>,
    pub drift_epsilons: Vec<(i64, i64)>,
    pub drift_mc_draws: usize,
    pub window_trajectories: usize,
    pub epoch_runs: usize,
    pub delay_users: Vec<usize>,
    pub delay_loads: Vec<f64>,
    pub seeds: usize,
    pub scaling_users: Vec<usize>,
    pub determinism_samples: usize,
}

impl Scale {
    /// Acceptance sizes.
    pub fn full() -> Self {
        Self {
            collision_users: vec![2, 4, 8, 16, 32, 64],
            collision_runs: 100,
            long_horizon: 100_000,
            belief_horizon: 8,
            belief_rational_horizon: 6,
            drift_users: vec![2, 3, 5],
            drift_epsilons: vec![(1, 10), (1, 2)],
            drift_mc_draws: 1_000_000,
            window_trajectories: 1000,
            epoch_runs: 20,
            delay_users: vec![4, 8, 16, 32],
            delay_loads: vec![0.3, 0.6, 0.9],
            seeds: 5,
            scaling_users: vec![10, 20, 40, 80],
            determinism_samples: 10_000,
        }
    }

    pub fn quick() -> Self {
        Self {
            collision_users: vec![2, 4, 8],
            collision_runs: 6,
            long_horizon: 20_000,
            belief_horizon: 5,
            belief_rational_horizon: 3,
            drift_users: vec![2, 3],
            drift_epsilons: vec![(1, 2)],
            drift_mc_draws: 50_000,
            window_trajectories: 100,
            epoch_runs: 4,
            delay_users: vec![4, 8],
            delay_loads: vec![0.3, 0.6],
            seeds: 3,
            scaling_users: vec![10, 20],
            determinism_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:>2}. {}: {}", self.id, self.name, self.detail)
    }
}

fn outcome(id: usize, name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { id, name, passed, detail }
}

fn asymmetric(users: usize, load: f64) -> Result<ArrivalRates, SimError> {
    let rates = pattern_rates(Pattern::Asymmetric, users, load)?;
    ArrivalRates::new(rates).map_err(SimError::from)
}

/// Mixed-load CIMA runs shared by the collision and bound audits.
fn audit_runs(scale: &Scale) -> Result<Vec<(usize, cima_core::RunAudit)>, SimError> {
    (0..scale.collision_runs)
        .into_par_iter()
        .map(|i| {
            let users = scale.collision_users[i % scale.collision_users.len()];
            let load = [0.3, 0.6, 0.9, 0.99][(i / scale.collision_users.len()) % 4];
            let rates = asymmetric(users, load)?;
            let out = run_protocol(ProtocolKind::Cima, &rates, scale.long_horizon, 1000 + i as u64)?;
            Ok((users, out.audit))
        })
        .collect()
}

/// Zero collisions on every CIMA run, then replica agreement and dominance
/// on the same runs.
pub fn collision_and_bound_checks(scale: &Scale) -> Result<[CheckOutcome; 2], SimError> {
    let audits = audit_runs(scale)?;
    let collisions: u64 = audits.iter().map(|(_, a)| a.collisions).sum();
    let replica: u64 = audits.iter().map(|(_, a)| a.replica_mismatches).sum();
    let dominance: u64 = audits.iter().map(|(_, a)| a.dominance_violations).sum();
    let local: u64 = audits.iter().map(|(_, a)| a.local_view_mismatches).sum();
    let runs = audits.len();
    Ok([
        outcome(
            1,
            "collision freedom",
            collisions == 0,
            format!("{runs} runs, N in {:?}, T={}: {collisions} collisions", scale.collision_users, scale.long_horizon),
        ),
        outcome(
            2,
            "bound replicas and dominance",
            replica + dominance + local == 0,
            format!("{runs} runs: {replica} replica mismatches, {dominance} dominance violations, {local} local-view mismatches"),
        ),
    ])
}

/// Brute-force joint belief against the product of recursive marginals.
pub fn belief_check(scale: &Scale) -> Result<CheckOutcome, SimError> {
    let grid = [1i64, 2, 3, 4];
    let pairs: Vec<(i64, i64)> = grid.iter().flat_map(|&a| grid.iter().map(move |&b| (a, b))).collect();
    let mut worst = 0.0f64;
    let mut float_mismatches = 0usize;
    let mut rational_failures = 0usize;
    let mut histories = 0usize;
    for &(a, b) in &pairs {
        let rates = [a as f64 / 10.0, b as f64 / 10.0];
        for horizon in 1..=scale.belief_horizon {
            let report = verify_factorization(&rates, horizon)?;
            worst = worst.max(report.max_deviation).max(report.max_normalization_error);
            float_mismatches += report.bound_mismatches;
            histories += report.histories;
        }
        let exact = [BigRational::from_ratio(a, 10), BigRational::from_ratio(b, 10)];
        for horizon in 1..=scale.belief_rational_horizon {
            let report = verify_factorization(&exact, horizon)?;
            let zero = BigRational::from_u64(0);
            if report.max_deviation != zero || report.max_normalization_error != zero || report.bound_mismatches != 0
            {
                rational_failures += 1;
            }
        }
    }
    let passed = worst < 1e-12 && float_mismatches == 0 && rational_failures == 0;
    Ok(outcome(
        3,
        "belief factorization",
        passed,
        format!(
            "{} rate pairs, T<={} ({histories} histories): max deviation {worst:.2e}, {float_mismatches} bound mismatches, {rational_failures} inexact rational cases (T<={})",
            pairs.len(),
            scale.belief_horizon,
            scale.belief_rational_horizon
        ),
    ))
}

/// Drift region check in exact arithmetic plus the Monte-Carlo comparison.
pub fn drift_check(scale: &Scale) -> Result<CheckOutcome, SimError> {
    let cases: Vec<(usize, (i64, i64))> = scale
        .drift_users
        .iter()
        .flat_map(|&n| scale.drift_epsilons.iter().map(move |&e| (n, e)))
        .collect();
    let reports = cases
        .par_iter()
        .map(|&(users, (en, ed))| {
            let rate = Ratio::new(ed - en, ed * users as i64);
            let rates = vec![rate; users];
            let cap = LyapunovParams::new(&rates)?.inverse_alpha_ceil() + 5;
            let mut options = DriftCheckOptions::new(cap);
            options.mc_draws = scale.drift_mc_draws;
            options.seed = users as u64 * 100 + en as u64;
            check_drift_region(&rates, &options).map(|r| (users, (en, ed), r))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut parts = Vec::new();
    let mut passed = true;
    for (users, (en, ed), r) in &reports {
        passed &= r.passed();
        let coverage = match r.coverage {
            GridCoverage::Exhaustive => "exhaustive".to_string(),
            GridCoverage::SelectorClasses { .. } => "selector classes".to_string(),
        };
        let mc_ok = r.monte_carlo.iter().filter(|c| c.within_three_se).count();
        parts.push(format!(
            "N={users} eps={en}/{ed} cap={} {coverage} {} states, {} violations, MC {mc_ok}/{}",
            r.grid_cap,
            r.states_checked,
            r.violation_count,
            r.monte_carlo.len()
        ));
    }
    Ok(outcome(4, "drift inequality", passed, parts.join("; ")))
}

/// The service window guarantee on short CIMA trajectories.
pub fn window_check(scale: &Scale) -> Result<CheckOutcome, SimError> {
    let results = (0..scale.window_trajectories)
        .into_par_iter()
        .map(|i| {
            let users = 2 + i % 7;
            let load = if (i / 7) % 2 == 0 { 0.5 } else { 0.9 };
            let rates = ArrivalRates::symmetric(users, load)?;
            let out = run_protocol(ProtocolKind::Cima, &rates, 500, 5000 + i as u64)?;
            lemma4_window_check(&out.trajectory).map(|w| (w.windows_checked, w.passed()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let windows: usize = results.iter().map(|r| r.0).sum();
    let failures = results.iter().filter(|r| !r.1).count();
    Ok(outcome(
        5,
        "service windows",
        failures == 0,
        format!("{} trajectories, {windows} windows, {failures} failing trajectories", results.len()),
    ))
}

/// Renewal epochs: per-epoch length bound and mean backlog at epochs.
pub fn epoch_check(scale: &Scale) -> Result<CheckOutcome, SimError> {
    let (users, load) = (4usize, 0.6);
    let reports = (0..scale.epoch_runs)
        .into_par_iter()
        .map(|i| {
            let rates = asymmetric(users, load)?;
            let out = run_protocol(ProtocolKind::Cima, &rates, scale.long_horizon, 7000 + i as u64)?;
            renewal_epochs(&out.trajectory).map_err(SimError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let violations: usize = reports.iter().map(|r| r.bound_violations.len()).sum();
    let totals: Vec<f64> = reports.iter().flat_map(|r| r.queue_totals().map(|q| q as f64)).collect();
    let (mean, se) = mean_and_se(&totals);
    let reference = cima_core::analysis::epoch_queue_bound(load, users);
    let passed = violations == 0 && mean <= reference + 3.0 * se;
    Ok(outcome(
        6,
        "renewal epochs",
        passed,
        format!(
            "{} runs, {} epochs, {violations} length violations, mean backlog {mean:.4} (se {se:.4}) vs {reference:.4}",
            reports.len(),
            totals.len()
        ),
    ))
}

fn cima_config(users: usize, load: f64, scale: &Scale, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ProtocolKind::Cima, users, load, Pattern::Asymmetric);
    cfg.horizon = scale.long_horizon;
    cfg.replications = scale.seeds;
    cfg.seed = seed;
    cfg
}

/// Mean CIMA delay against `2N/(1-λ)` on every cell.
pub fn delay_bound_check(scale: &Scale) -> Result<CheckOutcome, SimError> {
    let cells: Vec<(usize, f64)> =
        scale.delay_users.iter().flat_map(|&n| scale.delay_loads.iter().map(move |&l| (n, l))).collect();
    let results = cells
        .par_iter()
        .map(|&(n, l)| run_experiment(&cima_config(n, l, scale, 11)).map(|r| (n, l, r.aggregate.delay.unwrap_or(0.0))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (n, l, d) in &results {
        let bound = 2.0 * *n as f64 / (1.0 - l);
        worst = worst.max(d / bound);
        if *d > bound {
            failures.push(format!("N={n} load={l} delay={d:.3} bound={bound:.3}"));
        }
    }
    let detail = if failures.is_empty() {
        format!("{} cells, largest delay/bound ratio {worst:.3}", results.len())
    } else {
        failures.join("; ")
    };
    Ok(outcome(7, "delay bound", failures.is_empty(), detail))
}

/// Delay roughly doubles when the user count doubles.
pub fn scaling_check(scale: &Scale) -> Result<CheckOutcome, SimError> {
    let delays = scale
        .scaling_users
        .par_iter()
        .map(|&n| run_experiment(&cima_config(n, 0.6, scale, 21)).map(|r| r.aggregate.delay.unwrap_or(0.0)))
        .collect::<Result<Vec<_>, _>>()?;
    let ratios: Vec<f64> = delays.windows(2).map(|w| w[1] / w[0]).collect();
    let passed = ratios.iter().all(|r| (1.5..=2.5).contains(r));
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Ok(outcome(
        8,
        "linear scaling",
        passed,
        format!("N {:?}: delays {:.3?}, ratios [{}]", scale.scaling_users, delays, shown.join(", ")),
    ))
}

/// TDMA instability above its capacity and back-off delay above CIMA.
pub fn ordering_check(scale: &Scale) -> Result<CheckOutcome, SimError> {
    let users = 4;
    let trend = |protocol: ProtocolKind| -> Result<(usize, usize), SimError> {
        let rates = asymmetric(users, 0.75)?;
        let flags = (0..scale.seeds)
            .into_par_iter()
            .map(|i| {
                let out = run_protocol(protocol, &rates, scale.long_horizon, 31 + i as u64)?;
                no_trend_check(&out.trajectory).map(|t| t.stable).map_err(SimError::from)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((flags.iter().filter(|s| **s).count(), flags.len()))
    };
    let (tdma_stable, runs) = trend(ProtocolKind::Tdma)?;
    let (cima_stable, _) = trend(ProtocolKind::Cima)?;

    let delay = |protocol: ProtocolKind| -> Result<f64, SimError> {
        let mut cfg = cima_config(users, 0.8, scale, 41);
        cfg.protocol = protocol;
        Ok(run_experiment(&cfg)?.aggregate.delay.unwrap_or(0.0))
    };
    let backoff = delay(ProtocolKind::Backoff)?;
    let cima = delay(ProtocolKind::Cima)?;
    let passed = tdma_stable == 0 && cima_stable == runs && backoff > cima;
    Ok(outcome(
        9,
        "protocol ordering",
        passed,
        format!(
            "load 0.75: tdma stable {tdma_stable}/{runs}, cima stable {cima_stable}/{runs}; load 0.8: backoff delay {backoff:.3} vs cima {cima:.3}"
        ),
    ))
}

/// Successor recomputation on fuzzed reachable states.
pub fn determinism_check(scale: &Scale) -> Result<CheckOutcome, SimError> {
    let per_config = scale.determinism_samples.div_ceil(4);
    let configs = [(2usize, 0.5), (3, 0.9), (5, 0.7), (8, 0.95)];
    let mut samples = Vec::new();
    for (i, &(users, load)) in configs.iter().enumerate() {
        let rates = ArrivalRates::symmetric(users, load)?;
        let remaining = scale.determinism_samples - samples.len();
        samples.extend(sample_reachable_states(&rates, per_config.min(remaining), 2000, 90 + i as u64)?);
    }
    let report = next_state_determinism_check(&samples)?;
    Ok(outcome(
        10,
        "determinism",
        report.passed(),
        format!(
            "{} samples: {} replay mismatches, {} structural mismatches",
            report.checked,
            report.replay_mismatches.len(),
            report.structural_mismatches.len()
        ),
    ))
}

/// Runs every check in order.
pub fn run_all(scale: &Scale) -> Result<Vec<CheckOutcome>, SimError> {
    let mut out = Vec::with_capacity(10);
    out.extend(collision_and_bound_checks(scale)?);
    out.push(belief_check(scale)?);
    out.push(drift_check(scale)?);
    out.push(window_check(scale)?);
    out.push(epoch_check(scale)?);
    out.push(delay_bound_check(scale)?);
    out.push(scaling_check(scale)?);
    out.push(ordering_check(scale)?);
    out.push(determinism_check(scale)?);
    Ok(out)
}
