//! Exact conditional queue-length beliefs under CIMA.
//!
//! Given the feedback history, the queue lengths are conditionally
//! independent, and each marginal follows a three-case recursion:
//!
//! * a user that was not selected: convolve with its Bernoulli arrival,
//! * the selected user after a success: condition on a non-empty queue,
//!   remove the served packet, then convolve,
//! * the selected user after an idle slot: the queue was empty, so the new
//!   marginal is just the arrival, `{0: 1 - λ, 1: λ}`.
//!
//! [`brute_force_joint`] is the independent check of all of this: it
//! enumerates every arrival sequence, runs the protocol forward and groups the
//! resulting joint queue distribution by realized feedback history.

use std::collections::BTreeMap;

use crate::channel::{apply_dynamics, Feedback, QueueVector};
use crate::cima::{select_user, update_bounds, BoundVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Conditional PMF of one user's queue length, indexed by length.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalBelief<S> {
    owner: usize,
    pmf: Vec<S>,
}

impl<S: Scalar> MarginalBelief<S> {
    pub fn point_mass_at_zero(owner: usize) -> Self {
        Self { owner, pmf: vec![S::one()] }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn pmf(&self) -> &[S] {
        &self.pmf
    }

    pub fn prob(&self, q: u64) -> S {
        self.pmf.get(q as usize).cloned().unwrap_or_else(S::zero)
    }

    pub fn total_mass(&self) -> S {
        crate::scalar::sum(&self.pmf)
    }

    /// Largest length carrying non-negligible mass.
    pub fn support_max(&self) -> u64 {
        self.pmf.iter().rposition(|p| !p.is_negligible()).unwrap_or(0) as u64
    }

    fn convolve_arrival(pmf: &[S], rate: &S) -> Vec<S> {
        let stay = S::one() - rate.clone();
        let mut out = vec![S::zero(); pmf.len() + 1];
        for (q, p) in pmf.iter().enumerate() {
            out[q] = out[q].clone() + stay.clone() * p.clone();
            out[q + 1] = out[q + 1].clone() + rate.clone() * p.clone();
        }
        trim_zeros(&mut out);
        out
    }

    fn unselected(&self, rate: &S) -> Self {
        Self { owner: self.owner, pmf: Self::convolve_arrival(&self.pmf, rate) }
    }

    fn served(&self, rate: &S) -> Result<Self> {
        let busy = crate::scalar::sum(&self.pmf[1..]);
        if busy.is_negligible() {
            return Err(Error::ImpossibleObservation { feedback: Feedback::Success.symbol(), user: self.owner });
        }
        let shifted: Vec<S> = self.pmf[1..].iter().map(|p| p.clone() / busy.clone()).collect();
        Ok(Self { owner: self.owner, pmf: Self::convolve_arrival(&shifted, rate) })
    }

    fn found_empty(&self, rate: &S) -> Result<Self> {
        if self.prob(0).is_negligible() {
            return Err(Error::ImpossibleObservation { feedback: Feedback::Idle.symbol(), user: self.owner });
        }
        let mut pmf = vec![S::one() - rate.clone(), rate.clone()];
        trim_zeros(&mut pmf);
        Ok(Self { owner: self.owner, pmf })
    }
}

fn trim_zeros<S: Scalar>(pmf: &mut Vec<S>) {
    while pmf.len() > 1 && pmf.last().is_some_and(|p| p.is_zero()) {
        pmf.pop();
    }
}

/// Product-form conditional belief over all users after `slot` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefProfile<S> {
    marginals: Vec<MarginalBelief<S>>,
    slot: u64,
    rates: Vec<S>,
}

/// Belief at time zero: every queue is empty.
pub fn init_profile<S: Scalar>(rates: Vec<S>) -> Result<BeliefProfile<S>> {
    if rates.is_empty() {
        return Err(Error::NoUsers);
    }
    let marginals = (0..rates.len()).map(MarginalBelief::point_mass_at_zero).collect();
    Ok(BeliefProfile { marginals, slot: 0, rates })
}

impl<S: Scalar> BeliefProfile<S> {
    pub fn users(&self) -> usize {
        self.marginals.len()
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn rates(&self) -> &[S] {
        &self.rates
    }

    pub fn marginal(&self, n: usize) -> &MarginalBelief<S> {
        &self.marginals[n]
    }

    pub fn marginals(&self) -> &[MarginalBelief<S>] {
        &self.marginals
    }

    pub fn support_max(&self, n: usize) -> u64 {
        self.marginals[n].support_max()
    }

    pub fn support_maxima(&self) -> Vec<u64> {
        self.marginals.iter().map(MarginalBelief::support_max).collect()
    }

    /// User scheduled in the current slot, read off the support maxima.
    pub fn selected(&self) -> usize {
        select_user(&self.support_maxima())
    }

    /// Probability of a joint queue vector under the product of marginals.
    pub fn joint_probability(&self, queues: &[u64]) -> S {
        self.marginals
            .iter()
            .zip(queues)
            .fold(S::one(), |acc, (m, &q)| acc * m.prob(q))
    }

    /// Conditions on this slot's feedback and advances one slot.
    pub fn update(&self, feedback: Feedback) -> Result<Self> {
        let v = self.selected();
        let marginals = self
            .marginals
            .iter()
            .zip(&self.rates)
            .enumerate()
            .map(|(n, (m, rate))| match (n == v, feedback) {
                (false, _) => Ok(m.unselected(rate)),
                (true, Feedback::Success) => m.served(rate),
                (true, Feedback::Idle) => m.found_empty(rate),
                (true, Feedback::Collision) => Err(Error::UnexpectedCollision { time: self.slot }),
            })
            .collect::<Result<Vec<_>>>()?;
        if feedback == Feedback::Collision {
            return Err(Error::UnexpectedCollision { time: self.slot });
        }
        Ok(Self { marginals, slot: self.slot + 1, rates: self.rates.clone() })
    }

    /// Belief after a whole feedback history, starting from empty queues.
    pub fn after_history(rates: Vec<S>, history: &[Feedback]) -> Result<Self> {
        history.iter().try_fold(init_profile(rates)?, |profile, &f| profile.update(f))
    }
}

/// Exact joint conditional PMF of `Q_T` given one feedback history.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalJoint<S> {
    /// Probability of observing the history at all.
    pub history_probability: S,
    pub pmf: BTreeMap<Vec<u64>, S>,
}

pub const MAX_ORACLE_USERS: usize = 3;
pub const MAX_ORACLE_HORIZON: usize = 10;

/// Enumerates all `2^(N·T)` arrival sequences, runs CIMA on each and groups the
/// resulting `Q_T` by feedback history. Refuses sizes above
/// [`MAX_ORACLE_USERS`] users or [`MAX_ORACLE_HORIZON`] slots.
pub fn brute_force_joint<S: Scalar>(
    rates: &[S],
    horizon: usize,
) -> Result<BTreeMap<Vec<Feedback>, ConditionalJoint<S>>> {
    let users = rates.len();
    if users == 0 {
        return Err(Error::NoUsers);
    }
    if users > MAX_ORACLE_USERS {
        return Err(Error::EnumerationLimit { what: "users", got: users, max: MAX_ORACLE_USERS });
    }
    if horizon > MAX_ORACLE_HORIZON {
        return Err(Error::EnumerationLimit { what: "horizon", got: horizon, max: MAX_ORACLE_HORIZON });
    }

    let masks: Vec<(Vec<bool>, S)> = (0u32..1 << users)
        .map(|mask| {
            let bits: Vec<bool> = (0..users).map(|n| mask >> n & 1 == 1).collect();
            let p = bits.iter().zip(rates).fold(S::one(), |acc, (&a, r)| {
                acc * if a { r.clone() } else { S::one() - r.clone() }
            });
            (bits, p)
        })
        .collect();

    let mut raw: BTreeMap<Vec<Feedback>, BTreeMap<Vec<u64>, S>> = BTreeMap::new();
    let mut history = Vec::with_capacity(horizon);
    enumerate(
        &masks,
        horizon,
        QueueVector::empty(users),
        BoundVector::zeros(users),
        S::one(),
        &mut history,
        &mut raw,
    )?;

    Ok(raw
        .into_iter()
        .map(|(h, pmf)| {
            let total = crate::scalar::sum(&pmf.values().cloned().collect::<Vec<_>>());
            let pmf = pmf.into_iter().map(|(q, p)| (q, p / total.clone())).collect();
            (h, ConditionalJoint { history_probability: total, pmf })
        })
        .collect())
}

fn enumerate<S: Scalar>(
    masks: &[(Vec<bool>, S)],
    remaining: usize,
    queues: QueueVector,
    bounds: BoundVector,
    weight: S,
    history: &mut Vec<Feedback>,
    out: &mut BTreeMap<Vec<Feedback>, BTreeMap<Vec<u64>, S>>,
) -> Result<()> {
    if weight.is_zero() {
        return Ok(());
    }
    if remaining == 0 {
        let slot = out.entry(history.clone()).or_default().entry(queues.into_inner()).or_insert_with(S::zero);
        *slot = slot.clone() + weight;
        return Ok(());
    }
    let v = select_user(&bounds);
    let decisions: Vec<bool> = (0..queues.len()).map(|n| n == v && queues[n] > 0).collect();
    let feedback = if queues[v] > 0 { Feedback::Success } else { Feedback::Idle };
    let next_bounds = update_bounds(&bounds, feedback)?;
    history.push(feedback);
    for (arrivals, p) in masks {
        let next = apply_dynamics(&queues, &decisions, arrivals)?;
        enumerate(masks, remaining - 1, next, next_bounds.clone(), weight.clone() * p.clone(), history, out)?;
    }
    history.pop();
    Ok(())
}

/// Outcome of comparing the brute-force joint against the recursive product.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationReport<S> {
    pub histories: usize,
    /// Largest `|joint(q) - Π marginal(q^n)|` over all histories and vectors.
    pub max_deviation: S,
    /// Largest `|Σ pmf - 1|` over all recursive marginals.
    pub max_normalization_error: S,
    /// Slots where a support maximum differed from the protocol's bound.
    pub bound_mismatches: usize,
}

fn abs_diff<S: Scalar>(a: S, b: S) -> S {
    if a > b {
        a - b
    } else {
        b - a
    }
}

/// Runs [`brute_force_joint`] and checks, for every reachable history, that
/// the joint equals the product of recursive marginals and that every
/// support maximum equals CIMA's common bound along the history.
pub fn verify_factorization<S: Scalar>(rates: &[S], horizon: usize) -> Result<FactorizationReport<S>> {
    let joint = brute_force_joint(rates, horizon)?;
    let mut max_deviation = S::zero();
    let mut max_normalization_error = S::zero();
    let mut bound_mismatches = 0;
    for (history, cond) in &joint {
        let mut profile = init_profile(rates.to_vec())?;
        let mut bounds = BoundVector::zeros(rates.len());
        for &f in history {
            if profile.support_maxima() != *bounds {
                bound_mismatches += 1;
            }
            profile = profile.update(f)?;
            bounds = update_bounds(&bounds, f)?;
            for m in profile.marginals() {
                max_normalization_error = max_of(max_normalization_error, abs_diff(m.total_mass(), S::one()));
            }
        }
        if profile.support_maxima() != *bounds {
            bound_mismatches += 1;
        }
        // Compare over the union of both supports: the product grid.
        let extents: Vec<usize> = profile.marginals().iter().map(|m| m.pmf().len()).collect();
        for q in grid(&extents) {
            let product = profile.joint_probability(&q);
            let exact = cond.pmf.get(&q).cloned().unwrap_or_else(S::zero);
            max_deviation = max_of(max_deviation, abs_diff(product, exact));
        }
        for (q, p) in &cond.pmf {
            if q.iter().zip(&extents).any(|(&qn, &len)| qn as usize >= len) {
                max_deviation = max_of(max_deviation, p.clone());
            }
        }
    }
    Ok(FactorizationReport { histories: joint.len(), max_deviation, max_normalization_error, bound_mismatches })
}

fn max_of<S: Scalar>(a: S, b: S) -> S {
    if b > a {
        b
    } else {
        a
    }
}

fn grid(extents: &[usize]) -> Vec<Vec<u64>> {
    extents.iter().fold(vec![Vec::new()], |acc, &len| {
        acc.into_iter()
            .flat_map(|prefix| {
                (0..len as u64).map(move |q| {
                    let mut v = prefix.clone();
                    v.push(q);
                    v
                })
            })
            .collect()
    })
}
