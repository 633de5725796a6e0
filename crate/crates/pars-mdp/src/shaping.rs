//! Agent best responses, advantage gaps, minimal implementations,
//! implementability tests, tie-breaking perturbation, and the
//! unlimited-budget principal solver.

use std::collections::BTreeMap;

use crate::eval::{evaluate_policy, RewardMap, ValueProfile};
use crate::mdp::{ActionId, MdpInstance, Policy, StateId};
use crate::{ParsError, ETA};

/// Sparse nonnegative reward additions per (state, action).
///
/// The total mass of all entries is what the budget constrains. Exact zeros
/// are not stored; negative amounts are clamped to zero (they arise only as
/// float artifacts of gap arithmetic at the 1e-16 scale).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BonusFunction {
    entries: BTreeMap<(StateId, ActionId), f64>,
}

impl BonusFunction {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the bonus at `(s, a)`, replacing any previous amount.
    pub fn insert(&mut self, s: StateId, a: ActionId, amount: f64) {
        let amount = amount.max(0.0);
        if amount > 0.0 {
            self.entries.insert((s, a), amount);
        } else {
            self.entries.remove(&(s, a));
        }
    }

    /// Adds `amount` on top of the existing bonus at `(s, a)`.
    pub fn add(&mut self, s: StateId, a: ActionId, amount: f64) {
        let current = self.get(s, a);
        self.insert(s, a, current + amount);
    }

    pub fn get(&self, s: StateId, a: ActionId) -> f64 {
        self.entries.get(&(s, a)).copied().unwrap_or(0.0)
    }

    /// Total bonus mass Σ R^B(s,a) — the quantity the budget caps.
    pub fn total(&self) -> f64 {
        // Fold from +0.0: the empty iterator's `Sum` identity is −0.0,
        // which would leak a negative zero into budgets and documents.
        self.entries.values().fold(0.0, |acc, v| acc + v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, ActionId, f64)> + '_ {
        self.entries.iter().map(|(&(s, a), &v)| (s, a, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The agent's effective reward map R^A + R^B on `instance`.
    pub fn agent_reward_map(&self, instance: &MdpInstance) -> RewardMap {
        RewardMap::from_fn(instance, |s, _, arm| {
            arm.agent_reward + self.get(s, arm.action)
        })
    }
}

/// The agent's selected policy under a bonus, with both players' values.
///
/// Among agent-optimal policies (ties within [`ETA`]) the response maximizes
/// the principal's value — the tie-break contract.
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub policy: Policy,
    /// V(policy, R^A + R^B) at the initial state.
    pub agent_value: f64,
    /// V(policy, R^P) at the initial state.
    pub principal_value: f64,
    /// Per-state agent values under the response.
    pub agent_values: ValueProfile,
    /// Per-state principal values under the response.
    pub principal_values: ValueProfile,
}

/// Backward induction maximizing `primary` lexicographically, breaking
/// primary ties (within [`ETA`]) toward larger `secondary`, then toward the
/// lowest action id. Requires a clean, acyclic instance.
fn lexicographic_response(
    instance: &MdpInstance,
    primary: &RewardMap,
    secondary: &RewardMap,
) -> Result<(Policy, ValueProfile, ValueProfile), ParsError> {
    let report = instance.validate();
    if !report.is_clean() {
        return Err(ParsError::Validation {
            violations: report.violations,
        });
    }
    let order = instance.topological_order().ok_or_else(|| {
        ParsError::Precondition(
            "cyclic instance requires layer-graph conversion before solving".to_string(),
        )
    })?;
    let depths = instance.min_depths();
    let n = instance.num_states();
    let mut vp = vec![0.0; n];
    let mut vs = vec![0.0; n];
    let mut policy = Policy::empty(n);
    for &s in order.iter().rev() {
        let Some(d) = depths[s] else { continue };
        if d >= instance.horizon() || instance.arms(s).is_empty() {
            continue;
        }
        let qs: Vec<(f64, f64)> = instance
            .arms(s)
            .iter()
            .enumerate()
            .map(|(pos, arm)| {
                let mut qp = primary.get(s, pos);
                let mut qsec = secondary.get(s, pos);
                for &(t, p) in &arm.transitions {
                    qp += p * vp[t];
                    qsec += p * vs[t];
                }
                (qp, qsec)
            })
            .collect();
        let max_primary = qs.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
        let max_secondary = qs
            .iter()
            .filter(|q| q.0 >= max_primary - ETA)
            .map(|q| q.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let pos = qs
            .iter()
            .position(|q| q.0 >= max_primary - ETA && q.1 >= max_secondary - ETA)
            .expect("at least one arm attains the lexicographic maximum");
        vp[s] = qs[pos].0;
        vs[s] = qs[pos].1;
        policy.set(s, instance.arms(s)[pos].action);
    }
    Ok((
        policy,
        ValueProfile::from_values(vp),
        ValueProfile::from_values(vs),
    ))
}

/// The agent's best response to `bonus`: maximizes V(·, R^A + R^B), breaking
/// ties (within [`ETA`]) toward the principal's value, then toward the lowest
/// action id. Backward induction over the acyclic instance.
pub fn best_response(
    instance: &MdpInstance,
    bonus: &BonusFunction,
) -> Result<BestResponse, ParsError> {
    let agent_map = bonus.agent_reward_map(instance);
    let principal_map = RewardMap::principal(instance);
    let (policy, agent_values, principal_values) =
        lexicographic_response(instance, &agent_map, &principal_map)?;
    Ok(BestResponse {
        agent_value: agent_values.at(instance.initial()),
        principal_value: principal_values.at(instance.initial()),
        policy,
        agent_values,
        principal_values,
    })
}

/// The agent's default policy π^A — the best response to a zero bonus.
pub fn agent_default_policy(instance: &MdpInstance) -> Result<BestResponse, ParsError> {
    best_response(instance, &BonusFunction::new())
}

/// Default response plus the advantage-gap table used by every solver.
#[derive(Debug, Clone)]
pub struct GapAnalysis {
    /// The agent's zero-bonus response π^A.
    pub default: BestResponse,
    /// gaps[s][arm_pos] = V_s(π^A, R^A) − Q^{π^A}(s, a, R^A): the minimal
    /// bonus making the agent indifferent to taking `a` at `s`. Exactly 0.0
    /// at the default action; ≥ −[`ETA`] everywhere by optimality.
    pub gaps: Vec<Vec<f64>>,
}

/// Computes π^A and the full advantage-gap table in one pass.
pub fn advantage_gaps(instance: &MdpInstance) -> Result<GapAnalysis, ParsError> {
    let default = agent_default_policy(instance)?;
    let depths = instance.min_depths();
    let gaps = (0..instance.num_states())
        .map(|s| {
            let in_horizon = matches!(depths[s], Some(d) if d < instance.horizon());
            instance
                .arms(s)
                .iter()
                .map(|arm| {
                    if !in_horizon {
                        return 0.0;
                    }
                    let mut q = arm.agent_reward;
                    for &(t, p) in &arm.transitions {
                        q += p * default.agent_values.at(t);
                    }
                    default.agent_values.at(s) - q
                })
                .collect()
        })
        .collect();
    Ok(GapAnalysis { default, gaps })
}

/// The advantage gap of a single (state, action) pair:
/// Q^{π^A}(s, π^A(s), R^A) − Q^{π^A}(s, a, R^A). Zero when `a` is the
/// default action; always ≥ −[`ETA`] by the default policy's optimality.
pub fn advantage_gap(instance: &MdpInstance, s: StateId, a: ActionId) -> Result<f64, ParsError> {
    let pos = instance.arm_position(s, a).ok_or_else(|| {
        ParsError::Precondition(format!(
            "unknown action {} at state {}",
            a,
            instance.state_name(s)
        ))
    })?;
    Ok(advantage_gaps(instance)?.gaps[s][pos])
}

/// The cheapest bonus implementing `policy`: places the exact advantage gap
/// on every pair (s, policy(s)) reachable under `policy` where the choice
/// differs from π^A(s). Zero-gap conversions (exact ties) need no bonus and
/// are not stored.
pub fn minimal_implementation(
    instance: &MdpInstance,
    policy: &Policy,
) -> Result<BonusFunction, ParsError> {
    let analysis = advantage_gaps(instance)?;
    Ok(minimal_implementation_with(instance, policy, &analysis))
}

/// [`minimal_implementation`] against a precomputed gap table.
pub fn minimal_implementation_with(
    instance: &MdpInstance,
    policy: &Policy,
    analysis: &GapAnalysis,
) -> BonusFunction {
    let depths = instance.min_depths();
    let support = policy.support(instance);
    let mut bonus = BonusFunction::new();
    for s in 0..instance.num_states() {
        if !support[s] || !matches!(depths[s], Some(d) if d < instance.horizon()) {
            continue;
        }
        let Some(a) = policy.choice(s) else { continue };
        if analysis.default.policy.choice(s) == Some(a) {
            continue;
        }
        if let Some(pos) = instance.arm_position(s, a) {
            bonus.insert(s, a, analysis.gaps[s][pos]);
        }
    }
    bonus
}

/// Is `policy` implementable with bonus mass at most `b`?
///
/// Deterministic layouts use the value criterion
/// V(π, R^A) ≥ V(π^A, R^A) − b (the two are equivalent there by the
/// telescoping identity); other layouts compare the minimal implementation's
/// total against `b`. Both comparisons carry an [`ETA`] tolerance.
pub fn is_b_implementable(
    instance: &MdpInstance,
    policy: &Policy,
    b: f64,
) -> Result<bool, ParsError> {
    if instance.is_deterministic() {
        let default = agent_default_policy(instance)?;
        let value = evaluate_policy(instance, policy, &RewardMap::agent(instance))?
            .at(instance.initial());
        Ok(value >= default.agent_value - b - ETA)
    } else {
        Ok(minimal_implementation(instance, policy)?.total() <= b + ETA)
    }
}

/// Strict tie-breaking: adds 2^{depth(s)}·δ on (s, target(s)) along the
/// target's support, making `target` the unique agent-optimal policy under
/// the returned bonus (any deviation forfeits at least its own depth's
/// perturbation weight). Errors when `target` is not already agent-optimal
/// under `bonus`.
pub fn tie_break_perturbation(
    instance: &MdpInstance,
    bonus: &BonusFunction,
    target: &Policy,
    delta: f64,
) -> Result<BonusFunction, ParsError> {
    let response = best_response(instance, bonus)?;
    let target_value =
        evaluate_policy(instance, target, &bonus.agent_reward_map(instance))?
            .at(instance.initial());
    if target_value < response.agent_value - ETA {
        return Err(ParsError::Precondition(format!(
            "target policy is not agent-optimal under the bonus \
             (target value {target_value}, best response {})",
            response.agent_value
        )));
    }
    if delta == 0.0 {
        return Ok(bonus.clone());
    }
    let depths = instance.min_depths();
    let support = target.support(instance);
    let mut perturbed = bonus.clone();
    for s in 0..instance.num_states() {
        if !support[s] {
            continue;
        }
        let Some(d) = depths[s] else { continue };
        if d >= instance.horizon() {
            continue;
        }
        if let Some(a) = target.choice(s) {
            perturbed.add(s, a, (1u64 << d) as f64 * delta);
        }
    }
    Ok(perturbed)
}

/// With no budget cap the principal implements her own optimal policy π^P:
/// returns its minimal implementation and the policy. The bonus total
/// V(π^A, R^A) − V(π^P, R^A)-shaped gap sum is the cheapest possible.
pub fn unlimited_principal_bonus(
    instance: &MdpInstance,
) -> Result<(BonusFunction, Policy), ParsError> {
    let principal_map = RewardMap::principal(instance);
    let agent_map = RewardMap::agent(instance);
    let (policy, _, _) = lexicographic_response(instance, &principal_map, &agent_map)?;
    let bonus = minimal_implementation(instance, &policy)?;
    Ok((bonus, policy))
}
