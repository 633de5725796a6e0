//! Exhaustive reference solvers: full policy and path catalogs, and the
//! exact budget-constrained optimum they induce. These are the ground truth
//! the polynomial-time solvers are validated against.

use crate::eval::{evaluate_policy, RewardMap};
use crate::mdp::{MdpInstance, Policy, StateId};
use crate::shaping::{advantage_gaps, minimal_implementation_with, BonusFunction};
use crate::{ParsError, ETA};

/// Default ceiling on enumerated policies / paths (10^7).
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// One enumerated policy with both players' values under the base rewards
/// (no bonus applied).
#[derive(Debug, Clone)]
pub struct PolicyOutcome {
    pub policy: Policy,
    /// V(policy, R^A) at the initial state.
    pub agent_value: f64,
    /// V(policy, R^P) at the initial state.
    pub principal_value: f64,
}

/// One root-to-end action path of a deterministic acyclic instance.
#[derive(Debug, Clone)]
pub struct PathOutcome {
    /// Visited states, starting at the initial state.
    pub states: Vec<StateId>,
    /// The (state, arm position) choices along the path.
    pub choices: Vec<(StateId, usize)>,
    pub agent_value: f64,
    pub principal_value: f64,
}

/// The exact optimum: the best implementable policy, its cheapest bonus,
/// and the realized values.
#[derive(Debug, Clone)]
pub struct BruteForceSolution {
    pub policy: Policy,
    pub bonus: BonusFunction,
    /// V(policy, R^P).
    pub principal_value: f64,
    /// V(policy, R^A + bonus) — equals the agent's default value by
    /// indifference.
    pub agent_value: f64,
    pub budget_used: f64,
}

/// States where a policy actually chooses: reachable, within the horizon,
/// and carrying at least one action.
fn decision_states(instance: &MdpInstance) -> Vec<StateId> {
    let reachable = instance.reachable();
    let depths = instance.min_depths();
    (0..instance.num_states())
        .filter(|&s| {
            reachable[s]
                && matches!(depths[s], Some(d) if d < instance.horizon())
                && !instance.arms(s).is_empty()
        })
        .collect()
}

fn require_clean_acyclic(instance: &MdpInstance) -> Result<(), ParsError> {
    let report = instance.validate();
    if !report.is_clean() {
        return Err(ParsError::Validation {
            violations: report.violations,
        });
    }
    if !instance.is_acyclic() {
        return Err(ParsError::Precondition(
            "cyclic instance requires layer-graph conversion before enumeration".to_string(),
        ));
    }
    Ok(())
}

/// Enumerates every deterministic policy over the decision states and
/// evaluates both players. Errors with the policy count when it exceeds
/// `cap` (default [`DEFAULT_ENUMERATION_CAP`]).
pub fn brute_force_catalog(
    instance: &MdpInstance,
    cap: Option<u128>,
) -> Result<Vec<PolicyOutcome>, ParsError> {
    require_clean_acyclic(instance)?;
    let cap = cap.unwrap_or(DEFAULT_ENUMERATION_CAP);
    let decisions = decision_states(instance);
    let count = decisions
        .iter()
        .fold(1u128, |acc, &s| acc.saturating_mul(instance.arms(s).len() as u128));
    if count > cap {
        return Err(ParsError::EnumerationCap { count, cap });
    }
    let agent_map = RewardMap::agent(instance);
    let principal_map = RewardMap::principal(instance);
    let mut outcomes = Vec::with_capacity(count as usize);
    let mut odometer = vec![0usize; decisions.len()];
    loop {
        let mut policy = Policy::empty(instance.num_states());
        for (i, &s) in decisions.iter().enumerate() {
            policy.set(s, instance.arms(s)[odometer[i]].action);
        }
        let agent_value = evaluate_policy(instance, &policy, &agent_map)?.at(instance.initial());
        let principal_value =
            evaluate_policy(instance, &policy, &principal_map)?.at(instance.initial());
        outcomes.push(PolicyOutcome {
            policy,
            agent_value,
            principal_value,
        });
        // Advance the odometer: lowest decision state spins fastest.
        let mut i = 0;
        loop {
            if i == decisions.len() {
                return Ok(outcomes);
            }
            odometer[i] += 1;
            if odometer[i] < instance.arms(decisions[i]).len() {
                break;
            }
            odometer[i] = 0;
            i += 1;
        }
    }
}

/// Enumerates every action path of a deterministic acyclic instance from the
/// initial state, valuing each by the same right-fold association
/// `v = r + v_child` that policy evaluation uses, so on graded instances
/// (every state sits at a single depth — trees, layered graphs) the values
/// match [`evaluate_policy`] bit for bit.
pub fn path_catalog(
    instance: &MdpInstance,
    cap: Option<u128>,
) -> Result<Vec<PathOutcome>, ParsError> {
    require_clean_acyclic(instance)?;
    if !instance.is_deterministic() {
        return Err(ParsError::Precondition(
            "path enumeration is defined for deterministic instances; \
             use the policy catalog instead"
                .to_string(),
        ));
    }
    let cap = cap.unwrap_or(DEFAULT_ENUMERATION_CAP);
    let depths = instance.min_depths();
    let horizon = instance.horizon();

    // Count paths before materializing them.
    let order = instance
        .topological_order()
        .expect("acyclicity was just checked");
    let mut counts = vec![1u128; instance.num_states()];
    for &s in order.iter().rev() {
        if !matches!(depths[s], Some(d) if d < horizon) || instance.arms(s).is_empty() {
            continue;
        }
        counts[s] = instance.arms(s).iter().fold(0u128, |acc, arm| {
            let sub = match arm.transitions.first() {
                Some(&(t, _)) if matches!(depths[t], Some(d) if d < horizon) => counts[t],
                _ => 1,
            };
            acc.saturating_add(sub)
        });
    }
    let total = counts[instance.initial()];
    if total > cap {
        return Err(ParsError::EnumerationCap { count: total, cap });
    }

    let mut out = Vec::with_capacity(total as usize);
    let mut choices: Vec<(StateId, usize)> = Vec::new();
    let mut states: Vec<StateId> = vec![instance.initial()];
    dfs_paths(instance, &depths, instance.initial(), &mut choices, &mut states, &mut out);
    Ok(out)
}

fn dfs_paths(
    instance: &MdpInstance,
    depths: &[Option<usize>],
    s: StateId,
    choices: &mut Vec<(StateId, usize)>,
    states: &mut Vec<StateId>,
    out: &mut Vec<PathOutcome>,
) {
    let in_horizon = matches!(depths[s], Some(d) if d < instance.horizon());
    if !in_horizon || instance.arms(s).is_empty() {
        out.push(finish_path(instance, choices, states));
        return;
    }
    for (pos, arm) in instance.arms(s).iter().enumerate() {
        choices.push((s, pos));
        match arm.transitions.first() {
            Some(&(t, _)) => {
                states.push(t);
                dfs_paths(instance, depths, t, choices, states, out);
                states.pop();
            }
            // Terminal arm: the reward is granted and the episode ends.
            None => out.push(finish_path(instance, choices, states)),
        }
        choices.pop();
    }
}

fn finish_path(
    instance: &MdpInstance,
    choices: &[(StateId, usize)],
    states: &[StateId],
) -> PathOutcome {
    let mut agent_value = 0.0;
    let mut principal_value = 0.0;
    for &(s, pos) in choices.iter().rev() {
        let arm = &instance.arms(s)[pos];
        agent_value = arm.agent_reward + agent_value;
        principal_value = arm.principal_reward + principal_value;
    }
    PathOutcome {
        states: states.to_vec(),
        choices: choices.to_vec(),
        agent_value,
        principal_value,
    }
}

/// Budget-indexed exhaustive reference over every root path of a
/// deterministic acyclic instance: the catalog is enumerated and sorted
/// once, after which the exact constrained optimum at any budget is a
/// binary search. Only the initial-state values are exposed — use
/// [`brute_force_optimal`] when the witness policy or bonus is needed.
pub struct PathIndex {
    /// (agent value, principal value), agent descending then principal
    /// descending.
    paths: Vec<(f64, f64)>,
    /// Index of the best-principal path within each prefix.
    prefix_best: Vec<usize>,
}

impl PathIndex {
    pub fn build(instance: &MdpInstance, cap: Option<u128>) -> Result<Self, ParsError> {
        let mut paths: Vec<(f64, f64)> = path_catalog(instance, cap)?
            .into_iter()
            .map(|p| (p.agent_value, p.principal_value))
            .collect();
        paths.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
        let mut prefix_best = Vec::with_capacity(paths.len());
        let mut best = 0usize;
        for (i, p) in paths.iter().enumerate() {
            if p.1 > paths[best].1 {
                best = i;
            }
            prefix_best.push(best);
        }
        Ok(PathIndex { paths, prefix_best })
    }

    /// The agent's default value: the maximum agent path value.
    pub fn default_agent_value(&self) -> f64 {
        self.paths[0].0
    }

    /// Exact optimum at `budget`: the best principal value among paths whose
    /// agent value is within the budget of the default (those are exactly
    /// the implementable paths). Returns (principal, agent) of the winner.
    pub fn query(&self, budget: f64) -> (f64, f64) {
        let threshold = self.paths[0].0 - budget - ETA;
        let k = self.paths.partition_point(|&(agent, _)| agent >= threshold);
        let idx = self.prefix_best[k - 1];
        (self.paths[idx].1, self.paths[idx].0)
    }
}

/// The exact optimum by exhaustion: among all policies whose minimal
/// implementation fits the instance budget, the one with maximal principal
/// value. Exact principal ties prefer the higher base agent value, then the
/// earliest policy in enumeration order (lowest action ids, lowest states
/// spinning fastest).
pub fn brute_force_optimal(
    instance: &MdpInstance,
    cap: Option<u128>,
) -> Result<BruteForceSolution, ParsError> {
    let analysis = advantage_gaps(instance)?;
    let catalog = brute_force_catalog(instance, cap)?;
    let budget = instance.budget();
    let mut best: Option<(PolicyOutcome, BonusFunction, f64)> = None;
    for outcome in catalog {
        let bonus = minimal_implementation_with(instance, &outcome.policy, &analysis);
        let total = bonus.total();
        if total > budget + ETA {
            continue;
        }
        let better = match &best {
            None => true,
            Some((incumbent, _, _)) => {
                outcome.principal_value > incumbent.principal_value
                    || (outcome.principal_value == incumbent.principal_value
                        && outcome.agent_value > incumbent.agent_value)
            }
        };
        if better {
            best = Some((outcome, bonus, total));
        }
    }
    let (outcome, bonus, budget_used) =
        best.expect("the agent default policy is always 0-implementable");
    let agent_value = evaluate_policy(instance, &outcome.policy, &bonus.agent_reward_map(instance))?
        .at(instance.initial());
    Ok(BruteForceSolution {
        policy: outcome.policy,
        bonus,
        principal_value: outcome.principal_value,
        agent_value,
        budget_used,
    })
}
