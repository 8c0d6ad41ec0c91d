//! Lyapunov function `h(q, b) = Σ (q^n + α b^n)` and its one-step drift.
//!
//! With `ε = 1 - λ_tot` and `α = ε / (2(N-1))`, the expected drift from a
//! state `y` with selected user `v` is
//!
//! ```text
//! Σ_{n≠v} λ^n + α(N-1) + λ^v - 1 + (1 + α(1 - b^v)) 1{q^v = 0}
//! ```
//!
//! which is at most `-ε/2` whenever `b^v ≥ 1/α + 1`. [`exact_drift`] evaluates
//! the closed form, [`enumerated_drift`] sums the transition over all `2^N`
//! arrival vectors, and [`monte_carlo_drift`] samples it.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::markov::{transition, JointState};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamKind};
use crate::scalar::{sum, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovParams<S> {
    pub users: usize,
    pub epsilon: S,
    pub alpha: S,
}

impl<S: Scalar> LyapunovParams<S> {
    pub fn new(rates: &[S]) -> Result<Self> {
        let users = rates.len();
        if users < 2 {
            return Err(Error::TooFewUsers { required: 2, got: users });
        }
        let epsilon = S::one() - sum(rates);
        if epsilon <= S::zero() {
            return Err(Error::Unsupportable { total: sum(rates).to_f64() });
        }
        let alpha = epsilon.clone() / S::from_u64(2 * (users as u64 - 1));
        Ok(Self { users, epsilon, alpha })
    }

    /// `1/α + 1`: drift is at most `-ε/2` once the selected bound reaches this.
    pub fn bound_threshold(&self) -> S {
        S::one() / self.alpha.clone() + S::one()
    }

    /// Smallest integer `k` with `k ≥ 1/α`.
    pub fn inverse_alpha_ceil(&self) -> u64 {
        let inv = S::one() / self.alpha.clone();
        let mut k = (inv.to_f64().floor() as u64).saturating_sub(1);
        while S::from_u64(k) < inv {
            k += 1;
        }
        k
    }
}

pub fn lyapunov<S: Scalar>(state: &JointState, params: &LyapunovParams<S>) -> S {
    state.queues.iter().zip(state.bounds.iter()).fold(S::zero(), |acc, (&q, &b)| {
        acc + S::from_u64(q) + params.alpha.clone() * S::from_u64(b)
    })
}

/// Closed-form conditional expected drift `E[h(Y') - h(Y) | Y = state]`.
pub fn exact_drift<S: Scalar>(state: &JointState, rates: &[S]) -> Result<S> {
    if rates.len() != state.users() {
        return Err(Error::LengthMismatch { expected: state.users(), got: rates.len() });
    }
    let params = LyapunovParams::new(rates)?;
    let v = state.selected();
    let others = rates
        .iter()
        .enumerate()
        .filter(|&(n, _)| n != v)
        .fold(S::zero(), |acc, (_, r)| acc + r.clone());
    let mut drift = others + params.alpha.clone() * S::from_u64(params.users as u64 - 1) + rates[v].clone() - S::one();
    if state.queues[v] == 0 {
        let b_v = S::from_u64(state.bounds[v]);
        drift = drift + S::one() + params.alpha.clone() * (S::one() - b_v);
    }
    Ok(drift)
}

/// Drift obtained by averaging `h(transition(y, a)) - h(y)` over every arrival
/// vector `a`, weighted by its probability.
pub fn enumerated_drift<S: Scalar>(state: &JointState, rates: &[S]) -> Result<S> {
    let users = state.users();
    if rates.len() != users {
        return Err(Error::LengthMismatch { expected: users, got: rates.len() });
    }
    if users > 20 {
        return Err(Error::EnumerationLimit { what: "users", got: users, max: 20 });
    }
    let params = LyapunovParams::new(rates)?;
    let here = lyapunov(state, &params);
    let mut total = S::zero();
    let mut arrivals = vec![false; users];
    for mask in 0u32..1 << users {
        let mut p = S::one();
        for (n, (bit, r)) in arrivals.iter_mut().zip(rates).enumerate() {
            *bit = mask >> n & 1 == 1;
            p = p * if *bit { r.clone() } else { S::one() - r.clone() };
        }
        let next = transition(state, &arrivals)?;
        total = total + p * (lyapunov(&next, &params) - here.clone());
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub draws: usize,
}

/// Sample mean and standard error of the one-step drift from `state`.
pub fn monte_carlo_drift(state: &JointState, rates: &[f64], draws: usize, rng: &mut ChaCha8Rng) -> Result<McEstimate> {
    let params = LyapunovParams::new(rates)?;
    let here = lyapunov(state, &params);
    let mut arrivals = vec![false; state.users()];
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for _ in 0..draws {
        for (bit, &r) in arrivals.iter_mut().zip(rates) {
            *bit = rng.gen::<f64>() < r;
        }
        let next = transition(state, &arrivals)?;
        let d = lyapunov(&next, &params) - here;
        s1 += d;
        s2 += d * d;
    }
    let n = draws as f64;
    let mean = s1 / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate { mean, std_err: (var / n).sqrt(), draws })
}

/// How the state grid was covered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GridCoverage {
    /// Every state in `[0, cap]^{2N}`.
    Exhaustive,
    /// Every `(v, q^v, b^v)` combination; the remaining coordinates are covered
    /// by extreme completions plus `random_completions` seeded draws per class.
    SelectorClasses { random_completions: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct McComparison {
    pub state: JointState,
    pub exact: f64,
    pub estimate: McEstimate,
    pub within_three_se: bool,
}

#[derive(Debug, Clone)]
pub struct DriftReport<S> {
    pub params: LyapunovParams<S>,
    pub grid_cap: u64,
    pub coverage: GridCoverage,
    /// States evaluated (all of them satisfy `b^v ≥ 1/α + 1`).
    pub states_checked: u64,
    pub violation_count: u64,
    /// First few witnesses with their drift.
    pub violations: Vec<(JointState, S)>,
    /// Largest drift seen over the checked states.
    pub max_drift: Option<S>,
    pub monte_carlo: Vec<McComparison>,
}

impl<S: Scalar> DriftReport<S> {
    pub fn passed(&self) -> bool {
        self.violation_count == 0 && self.monte_carlo.iter().all(|c| c.within_three_se)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DriftCheckOptions {
    pub grid_cap: u64,
    /// Above this many grid states, fall back to selector classes.
    pub exhaustive_limit: u64,
    pub random_completions: usize,
    pub mc_states: usize,
    pub mc_draws: usize,
    pub seed: u64,
}

impl DriftCheckOptions {
    pub fn new(grid_cap: u64) -> Self {
        Self {
            grid_cap,
            exhaustive_limit: 20_000_000,
            random_completions: 16,
            mc_states: 10,
            mc_draws: 1_000_000,
            seed: 0,
        }
    }
}

const MAX_WITNESSES: usize = 16;

/// Verifies `exact_drift ≤ -ε/2` on every grid state with `b^v ≥ 1/α + 1`,
/// and compares the closed form with Monte-Carlo estimates at random states.
pub fn check_drift_region<S: Scalar>(rates: &[S], options: &DriftCheckOptions) -> Result<DriftReport<S>> {
    let params = LyapunovParams::new(rates)?;
    let min_cap = params.inverse_alpha_ceil() + 2;
    if options.grid_cap < min_cap {
        return Err(Error::GridTooSmall { cap: options.grid_cap, min: min_cap });
    }
    let users = params.users;
    let cap = options.grid_cap;
    let limit = S::zero() - params.epsilon.clone() / S::from_u64(2);
    let threshold = params.bound_threshold();

    let mut report = DriftReport {
        params: params.clone(),
        grid_cap: cap,
        coverage: GridCoverage::Exhaustive,
        states_checked: 0,
        violation_count: 0,
        violations: Vec::new(),
        max_drift: None,
        monte_carlo: Vec::new(),
    };
    let record = |state: &JointState, report: &mut DriftReport<S>| -> Result<()> {
        let drift = exact_drift(state, rates)?;
        report.states_checked += 1;
        if report.max_drift.as_ref().is_none_or(|m| drift > *m) {
            report.max_drift = Some(drift.clone());
        }
        if drift > limit {
            report.violation_count += 1;
            if report.violations.len() < MAX_WITNESSES {
                report.violations.push((state.clone(), drift));
            }
        }
        Ok(())
    };

    let grid_states = (cap + 1).checked_pow(2 * users as u32);
    if grid_states.is_some_and(|g| g <= options.exhaustive_limit) {
        for bounds in Odometer::new(users, cap) {
            let v = crate::cima::select_user(&bounds);
            if S::from_u64(bounds[v]) < threshold {
                continue;
            }
            for queues in Odometer::new(users, cap) {
                let state = JointState { queues: queues.into(), bounds: bounds.clone().into() };
                record(&state, &mut report)?;
            }
        }
    } else {
        report.coverage = GridCoverage::SelectorClasses { random_completions: options.random_completions };
        let mut rng = stream_rng(options.seed, StreamKind::Analysis, 1);
        for v in 0..users {
            for b_v in 0..=cap {
                if S::from_u64(b_v) < threshold {
                    continue;
                }
                for q_v in 0..=cap {
                    for state in class_members(users, cap, v, b_v, q_v, options.random_completions, &mut rng) {
                        debug_assert_eq!(state.selected(), v);
                        record(&state, &mut report)?;
                    }
                }
            }
        }
    }

    if options.mc_states > 0 {
        let float_rates: Vec<f64> = rates.iter().map(Scalar::to_f64).collect();
        let mut rng = stream_rng(options.seed, StreamKind::Analysis, 2);
        for _ in 0..options.mc_states {
            let state = random_state(users, cap, &mut rng);
            let exact = exact_drift(&state, rates)?.to_f64();
            let estimate = monte_carlo_drift(&state, &float_rates, options.mc_draws, &mut rng)?;
            let within_three_se = if estimate.std_err > 0.0 {
                (estimate.mean - exact).abs() <= 3.0 * estimate.std_err
            } else {
                (estimate.mean - exact).abs() <= 1e-12
            };
            report.monte_carlo.push(McComparison { state, exact, estimate, within_three_se });
        }
    }
    Ok(report)
}

/// States whose selector is `v` with the given `(q^v, b^v)`: the four
/// all-low/all-high completions of the other coordinates plus random ones.
fn class_members(
    users: usize,
    cap: u64,
    v: usize,
    b_v: u64,
    q_v: u64,
    random: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<JointState> {
    // Users before v must sit strictly below b^v to keep v the selector.
    let max_bound = |n: usize| if n < v { b_v.checked_sub(1) } else { Some(b_v) };
    if (0..users).any(|n| n != v && max_bound(n).is_none()) {
        return Vec::new();
    }
    let build = |bounds: Vec<u64>, queues: Vec<u64>| JointState { queues: queues.into(), bounds: bounds.into() };
    let mut out = Vec::with_capacity(4 + random);
    for high_b in [false, true] {
        for high_q in [false, true] {
            let bounds = (0..users)
                .map(|n| if n == v { b_v } else if high_b { max_bound(n).unwrap() } else { 0 })
                .collect();
            let queues = (0..users).map(|n| if n == v { q_v } else if high_q { cap } else { 0 }).collect();
            out.push(build(bounds, queues));
        }
    }
    for _ in 0..random {
        let bounds = (0..users)
            .map(|n| if n == v { b_v } else { rng.gen_range(0..=max_bound(n).unwrap()) })
            .collect();
        let queues = (0..users).map(|n| if n == v { q_v } else { rng.gen_range(0..=cap) }).collect();
        out.push(build(bounds, queues));
    }
    out
}

fn random_state(users: usize, cap: u64, rng: &mut ChaCha8Rng) -> JointState {
    let queues = (0..users).map(|_| rng.gen_range(0..=cap)).collect::<Vec<_>>();
    let bounds = (0..users).map(|_| rng.gen_range(0..=cap)).collect::<Vec<_>>();
    JointState { queues: queues.into(), bounds: bounds.into() }
}

/// Iterates every vector in `[0, cap]^len` in lexicographic order.
struct Odometer {
    current: Option<Vec<u64>>,
    cap: u64,
}

impl Odometer {
    fn new(len: usize, cap: u64) -> Self {
        Self { current: Some(vec![0; len]), cap }
    }
}

impl Iterator for Odometer {
    type Item = Vec<u64>;

    fn next(&mut self) -> Option<Vec<u64>> {
        let out = self.current.clone()?;
        let cur = self.current.as_mut().unwrap();
        let mut i = cur.len();
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if cur[i] < self.cap {
                cur[i] += 1;
                cur[i + 1..].fill(0);
                break;
            }
        }
        Some(out)
    }
}
