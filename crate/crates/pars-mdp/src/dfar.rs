//! Pareto-frontier dynamic programming for deterministic acyclic instances.
//!
//! Every root-to-end action path carries a pair of path sums (agent,
//! principal). Propagating the Pareto frontier of these pairs bottom-up and
//! thresholding the agent coordinate at V(π^A) − B turns budget-constrained
//! shaping into a frontier query: a path is B-implementable exactly when its
//! agent sum is within B of the agent's default value.
//!
//! Four entry points share the machinery:
//!
//! * [`dfar_solve`] — exact on instances whose rewards already sit on an
//!   ε-grid (the frontier then has polynomially many entries);
//! * [`solve_bi_criteria`] — arbitrary rewards: floor-discretizes onto the
//!   grid, solves with the budget relaxed to B + H·ε, and certifies the
//!   (value − H·ε, budget + H·ε) guarantee against the original rewards;
//! * [`dfar_solve_delta`] — arbitrary rewards, budget kept at B: charges
//!   each conversion its gap rounded *down* to the grid, underpaying the
//!   agent by at most H·ε total (a δ-greedy agent complies);
//! * [`dfar_solve_pruned`] — arbitrary rewards, budget kept at B: true
//!   agent sums, but per-state frontiers keep one representative per
//!   ε-bucket, sandwiching the optimum between budgets B − H·ε and B.

use crate::eval::{evaluate_policy, RewardMap};
use crate::mdp::{InstanceBuilder, MdpInstance, Policy};
use crate::shaping::{
    advantage_gaps, agent_default_policy, minimal_implementation_with, GapAnalysis,
};
use crate::stum::BudgetGrid;
use crate::{Algorithm, BiCriteriaCertificate, ParsError, Solution, ETA};

/// One (agent, principal) value pair — a point a frontier is made of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityVector {
    pub agent: f64,
    pub principal: f64,
}

/// Removes dominated and duplicate points: keeps exactly the points for
/// which no other point is at least as good in both coordinates (and better
/// or equal-and-deduplicated overall). The result is sorted by ascending
/// agent value with strictly descending principal value.
pub fn pareto_prune(points: &[UtilityVector]) -> Vec<UtilityVector> {
    let mut sorted = points.to_vec();
    dominance_sweep(&mut sorted, |p| (p.agent, p.principal));
    sorted
}

/// Shared sweep: sort by key (primary desc, secondary desc), keep strictly
/// increasing secondaries, reverse — leaving primary ascending, secondary
/// strictly descending, no duplicates.
fn dominance_sweep<T, F>(items: &mut Vec<T>, key: F)
where
    F: Fn(&T) -> (f64, f64),
{
    items.sort_by(|a, b| {
        let (pa, sa) = key(a);
        let (pb, sb) = key(b);
        pb.total_cmp(&pa).then(sb.total_cmp(&sa))
    });
    let mut best = f64::NEG_INFINITY;
    items.retain(|item| {
        let (_, s) = key(item);
        if s > best {
            best = s;
            true
        } else {
            false
        }
    });
    items.reverse();
}

/// A frontier entry: path sums plus the backpointer recovering the path
/// (`child` indexes the successor state's frontier; `None` ends the path).
#[derive(Debug, Clone, Copy)]
struct Entry {
    agent: f64,
    principal: f64,
    arm_pos: usize,
    child: Option<usize>,
}

enum Pruning {
    /// Exact dominance only — the ε-discrete case.
    Exact,
    /// Keep one representative (max principal) per ε-bucket of agent value,
    /// then dominance.
    Bucket(f64),
}

fn preflight_det_acyclic(instance: &MdpInstance) -> Result<(), ParsError> {
    let report = instance.validate();
    if !report.is_clean() {
        return Err(ParsError::Validation {
            violations: report.violations,
        });
    }
    if !instance.is_deterministic() {
        return Err(ParsError::Precondition(format!(
            "frontier solver requires a deterministic instance (layout: {})",
            instance.layout()
        )));
    }
    if !instance.is_acyclic() {
        return Err(ParsError::Precondition(
            "cyclic instance requires layer-graph conversion before solving".to_string(),
        ));
    }
    Ok(())
}

fn require_grid_rewards(instance: &MdpInstance, epsilon: f64) -> Result<(), ParsError> {
    for s in 0..instance.num_states() {
        for arm in instance.arms(s) {
            for (label, r) in [("agent", arm.agent_reward), ("principal", arm.principal_reward)] {
                if ((r / epsilon).round() * epsilon - r).abs() > ETA {
                    return Err(ParsError::Precondition(format!(
                        "{label} reward {r} at ({}, {}) is not a multiple of epsilon \
                         {epsilon}; apply reward discretization first",
                        instance.state_name(s),
                        instance.action_name(arm.action)
                    )));
                }
            }
        }
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<(), ParsError> {
    if !(epsilon.is_finite() && epsilon > 100.0 * ETA) {
        return Err(ParsError::Precondition(format!(
            "epsilon {epsilon} must be finite and larger than {}",
            100.0 * ETA
        )));
    }
    Ok(())
}

/// Is `s` a state where a policy chooses (reachable, within horizon, arms)?
fn decision_mask(instance: &MdpInstance) -> Vec<bool> {
    let reachable = instance.reachable();
    let depths = instance.min_depths();
    (0..instance.num_states())
        .map(|s| {
            reachable[s]
                && matches!(depths[s], Some(d) if d < instance.horizon())
                && !instance.arms(s).is_empty()
        })
        .collect()
}

/// Builds per-state (agent, principal) frontiers bottom-up.
fn build_frontiers(
    instance: &MdpInstance,
    pruning: &Pruning,
) -> Vec<Option<Vec<Entry>>> {
    let decision = decision_mask(instance);
    let order = instance
        .topological_order()
        .expect("caller checked acyclicity");
    let mut frontiers: Vec<Option<Vec<Entry>>> = vec![None; instance.num_states()];
    for &s in order.iter().rev() {
        if !decision[s] {
            continue;
        }
        let mut raw: Vec<Entry> = Vec::new();
        for (pos, arm) in instance.arms(s).iter().enumerate() {
            let child = arm
                .transitions
                .first()
                .and_then(|&(t, _)| frontiers[t].as_ref().map(|f| (t, f)));
            match child {
                Some((_, entries)) => {
                    for (ci, e) in entries.iter().enumerate() {
                        raw.push(Entry {
                            agent: arm.agent_reward + e.agent,
                            principal: arm.principal_reward + e.principal,
                            arm_pos: pos,
                            child: Some(ci),
                        });
                    }
                }
                None => raw.push(Entry {
                    agent: arm.agent_reward,
                    principal: arm.principal_reward,
                    arm_pos: pos,
                    child: None,
                }),
            }
        }
        if let Pruning::Bucket(epsilon) = pruning {
            // One representative per ε-bucket of agent value: the one with
            // the best principal (tie: the higher agent, for feasibility).
            let bucket = |e: &Entry| ((e.agent + ETA) / epsilon).floor() as i64;
            raw.sort_by(|a, b| {
                bucket(a)
                    .cmp(&bucket(b))
                    .then(b.principal.total_cmp(&a.principal))
                    .then(b.agent.total_cmp(&a.agent))
            });
            raw.dedup_by_key(|e| bucket(e));
        }
        dominance_sweep(&mut raw, |e| (e.agent, e.principal));
        frontiers[s] = Some(raw);
    }
    frontiers
}

/// Follows backpointers from a root entry, returning the implemented policy
/// (agent-default off the path).
fn reconstruct(
    instance: &MdpInstance,
    frontiers: &[Option<Vec<Entry>>],
    analysis: &GapAnalysis,
    root_entry: usize,
) -> Policy {
    let mut policy = analysis.default.policy.clone();
    let mut s = instance.initial();
    let mut idx = root_entry;
    loop {
        let entries = frontiers[s].as_ref().expect("path visits decision states");
        let e = entries[idx];
        let arm = &instance.arms(s)[e.arm_pos];
        policy.set(s, arm.action);
        match e.child {
            Some(ci) => {
                s = arm.transitions.first().expect("non-terminal arm").0;
                idx = ci;
            }
            None => return policy,
        }
    }
}

/// A solution that just replays the agent's default policy (used when no
/// frontier entry meets the feasibility threshold).
fn default_solution(
    analysis: &GapAnalysis,
    algorithm: Algorithm,
    epsilon: f64,
    effective_budget: f64,
) -> Solution {
    Solution {
        algorithm,
        bonus: crate::shaping::BonusFunction::new(),
        policy: analysis.default.policy.clone(),
        principal_value: analysis.default.principal_value,
        agent_value: analysis.default.agent_value,
        budget_used: 0.0,
        epsilon,
        effective_budget,
        agent_shortfall: None,
        certificate: None,
    }
}

fn frontier_solve(
    instance: &MdpInstance,
    epsilon: f64,
    pruning: Pruning,
    algorithm: Algorithm,
) -> Result<Solution, ParsError> {
    let analysis = advantage_gaps(instance)?;
    let frontiers = build_frontiers(instance, &pruning);
    let threshold = analysis.default.agent_value - instance.budget() - ETA;
    let root = instance.initial();
    let selected = frontiers[root]
        .as_ref()
        .and_then(|entries| entries.iter().position(|e| e.agent >= threshold));
    let Some(root_entry) = selected else {
        return Ok(default_solution(&analysis, algorithm, epsilon, instance.budget()));
    };
    let policy = reconstruct(instance, &frontiers, &analysis, root_entry);
    let bonus = minimal_implementation_with(instance, &policy, &analysis);
    let agent_value = evaluate_policy(instance, &policy, &bonus.agent_reward_map(instance))?
        .at(root);
    let principal_value =
        evaluate_policy(instance, &policy, &RewardMap::principal(instance))?.at(root);
    Ok(Solution {
        algorithm,
        budget_used: bonus.total(),
        bonus,
        policy,
        principal_value,
        agent_value,
        epsilon,
        effective_budget: instance.budget(),
        agent_shortfall: None,
        certificate: None,
    })
}

/// Exact frontier solve for deterministic acyclic instances whose rewards
/// (both players') are multiples of `epsilon`: maximizes the principal's
/// path sum over paths whose agent sum is within the budget of the agent's
/// default value, paying each conversion its exact advantage gap.
pub fn dfar_solve(instance: &MdpInstance, epsilon: f64) -> Result<Solution, ParsError> {
    check_epsilon(epsilon)?;
    preflight_det_acyclic(instance)?;
    require_grid_rewards(instance, epsilon)?;
    frontier_solve(instance, epsilon, Pruning::Exact, Algorithm::Dfar)
}

/// Floor-discretizes both reward functions onto the ε-grid:
/// r ↦ ⌊(r + [`ETA`])/ε⌋·ε. Instances carrying negative rewards require ε to
/// divide 1 evenly so the −1 reward floor stays representable.
pub fn discretize_rewards(
    instance: &MdpInstance,
    epsilon: f64,
) -> Result<MdpInstance, ParsError> {
    check_epsilon(epsilon)?;
    if instance.allow_negative() {
        let per_unit = (1.0 / epsilon).round();
        if (per_unit * epsilon - 1.0).abs() > ETA {
            return Err(ParsError::Precondition(format!(
                "epsilon {epsilon} must evenly divide 1 to discretize an instance \
                 with negative rewards"
            )));
        }
    }
    let grid = |r: f64| ((r + ETA) / epsilon).floor() * epsilon;
    let mut b = InstanceBuilder::new();
    for s in 0..instance.num_states() {
        b.state(instance.state_name(s));
    }
    for a in 0..instance.num_actions() {
        b.action(instance.action_name(a));
    }
    for s in 0..instance.num_states() {
        for arm in instance.arms(s) {
            b.reward(s, arm.action, grid(arm.agent_reward), grid(arm.principal_reward));
            for &(t, p) in &arm.transitions {
                b.transition(s, arm.action, t, p);
            }
        }
    }
    b.build(
        instance.initial(),
        instance.horizon(),
        instance.budget(),
        instance.allow_negative(),
    )
}

/// Arbitrary-reward frontier solve with an additive guarantee. Cyclic
/// deterministic instances are unrolled into their layer graph first (the
/// returned policy then lives on the unrolled states). Rewards are
/// floor-discretized onto the ε-grid and the budget relaxed to B + H·ε; the
/// exact solve on that instance yields a bonus within the relaxed budget
/// whose policy, re-evaluated under the *original* rewards, is certified to
/// come within H·ε of the true optimum at budget B.
pub fn solve_bi_criteria(instance: &MdpInstance, epsilon: f64) -> Result<Solution, ParsError> {
    check_epsilon(epsilon)?;
    let unrolled;
    let base = if instance.is_acyclic() {
        instance
    } else {
        unrolled = instance.to_layer_graph()?;
        &unrolled
    };
    preflight_det_acyclic(base)?;
    let slack = base.horizon() as f64 * epsilon;
    let budget_cap = base.budget() + slack;
    let work = discretize_rewards(base, epsilon)?.with_budget(budget_cap);
    let inner = dfar_solve(&work, epsilon)?;

    // Report against the original rewards; the bonus stays the one computed
    // from discretized gaps (that is what keeps it within the cap).
    let principal_value = evaluate_policy(base, &inner.policy, &RewardMap::principal(base))?
        .at(base.initial());
    let agent_value =
        evaluate_policy(base, &inner.policy, &inner.bonus.agent_reward_map(base))?
            .at(base.initial());
    let default = agent_default_policy(base)?;
    let shortfall = (default.agent_value - agent_value).max(0.0);
    Ok(Solution {
        algorithm: Algorithm::DfarBiCriteria,
        budget_used: inner.bonus.total(),
        bonus: inner.bonus,
        policy: inner.policy,
        principal_value,
        agent_value,
        epsilon,
        effective_budget: budget_cap,
        agent_shortfall: Some(shortfall),
        certificate: Some(BiCriteriaCertificate {
            principal_value_original: principal_value,
            additive_slack: slack,
            budget_cap,
        }),
    })
}

/// Arbitrary-reward frontier solve that keeps the original budget by
/// underpaying: each conversion is charged its advantage gap rounded *down*
/// onto the ε-grid, and the bonus pays exactly the rounded amount. A
/// δ-greedy agent (δ = H·ε) complies; the reported `agent_shortfall` is the
/// total underpayment. The principal's value is at least the true optimum
/// at budget B.
pub fn dfar_solve_delta(instance: &MdpInstance, epsilon: f64) -> Result<Solution, ParsError> {
    check_epsilon(epsilon)?;
    preflight_det_acyclic(instance)?;
    let analysis = advantage_gaps(instance)?;
    let grid = BudgetGrid::new(epsilon, instance.budget())?;
    let m = grid.units;

    // Cost frontier: entries keyed by charged units (≤ m), valued by
    // principal path sum.
    #[derive(Clone, Copy)]
    struct CostEntry {
        units: usize,
        principal: f64,
        arm_pos: usize,
        child: Option<usize>,
    }
    let decision = decision_mask(instance);
    let order = instance
        .topological_order()
        .expect("preflight checked acyclicity");
    let mut frontiers: Vec<Option<Vec<CostEntry>>> = vec![None; instance.num_states()];
    for &s in order.iter().rev() {
        if !decision[s] {
            continue;
        }
        let mut raw: Vec<CostEntry> = Vec::new();
        for (pos, arm) in instance.arms(s).iter().enumerate() {
            let charge = grid.round_down(analysis.gaps[s][pos]);
            if charge > m {
                continue;
            }
            let child = arm
                .transitions
                .first()
                .and_then(|&(t, _)| frontiers[t].as_ref().map(|f| (t, f)));
            match child {
                Some((_, entries)) => {
                    for (ci, e) in entries.iter().enumerate() {
                        if charge + e.units > m {
                            continue;
                        }
                        raw.push(CostEntry {
                            units: charge + e.units,
                            principal: arm.principal_reward + e.principal,
                            arm_pos: pos,
                            child: Some(ci),
                        });
                    }
                }
                None => raw.push(CostEntry {
                    units: charge,
                    principal: arm.principal_reward,
                    arm_pos: pos,
                    child: None,
                }),
            }
        }
        // Cheapest-first staircase: strictly increasing principal.
        raw.sort_by(|a, b| {
            a.units
                .cmp(&b.units)
                .then(b.principal.total_cmp(&a.principal))
        });
        raw.dedup_by_key(|e| e.units);
        let mut best = f64::NEG_INFINITY;
        raw.retain(|e| {
            if e.principal > best {
                best = e.principal;
                true
            } else {
                false
            }
        });
        frontiers[s] = Some(raw);
    }

    let root = instance.initial();
    let best_entry = frontiers[root]
        .as_ref()
        .and_then(|entries| {
            entries
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.principal.total_cmp(&b.principal))
                .map(|(i, _)| i)
        });
    let Some(root_entry) = best_entry else {
        let mut sol =
            default_solution(&analysis, Algorithm::DfarDelta, epsilon, instance.budget());
        sol.agent_shortfall = Some(0.0);
        return Ok(sol);
    };

    // Reconstruct, paying each conversion its rounded-down gap.
    let mut policy = analysis.default.policy.clone();
    let mut bonus = crate::shaping::BonusFunction::new();
    let mut s = root;
    let mut idx = root_entry;
    loop {
        let e = frontiers[s].as_ref().expect("path visits decision states")[idx];
        let arm = &instance.arms(s)[e.arm_pos];
        policy.set(s, arm.action);
        if analysis.default.policy.choice(s) != Some(arm.action) {
            let gap = analysis.gaps[s][e.arm_pos];
            bonus.insert(s, arm.action, grid.value(grid.round_down(gap)));
        }
        match e.child {
            Some(ci) => {
                s = arm.transitions.first().expect("non-terminal arm").0;
                idx = ci;
            }
            None => break,
        }
    }
    let agent_value = evaluate_policy(instance, &policy, &bonus.agent_reward_map(instance))?
        .at(root);
    let principal_value =
        evaluate_policy(instance, &policy, &RewardMap::principal(instance))?.at(root);
    let shortfall = (analysis.default.agent_value - agent_value).max(0.0);
    Ok(Solution {
        algorithm: Algorithm::DfarDelta,
        budget_used: bonus.total(),
        bonus,
        policy,
        principal_value,
        agent_value,
        epsilon,
        effective_budget: instance.budget(),
        agent_shortfall: Some(shortfall),
        certificate: None,
    })
}

/// Arbitrary-reward frontier solve that keeps the original budget by
/// pruning: per-state frontiers hold true path sums but keep only one
/// representative per ε-bucket of agent value. The returned bonus pays
/// exact gaps and never exceeds B; the value lands between the true optima
/// at budgets B − H·ε and B.
pub fn dfar_solve_pruned(instance: &MdpInstance, epsilon: f64) -> Result<Solution, ParsError> {
    check_epsilon(epsilon)?;
    preflight_det_acyclic(instance)?;
    frontier_solve(
        instance,
        epsilon,
        Pruning::Bucket(epsilon),
        Algorithm::DfarPruned,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{six_state_example, two_state_cycle};
    use crate::oracle::brute_force::brute_force_optimal;
    use crate::oracle::generators::gen_layer_graph;

    fn path_of(inst: &MdpInstance, policy: &Policy) -> Vec<String> {
        policy
            .induced_path(inst)
            .unwrap()
            .iter()
            .map(|&s| inst.state_name(s).to_string())
            .collect()
    }

    #[test]
    fn pareto_prune_fixtures() {
        let p = |agent, principal| UtilityVector { agent, principal };
        // Incomparable points both survive.
        assert_eq!(pareto_prune(&[p(1.0, 2.0), p(2.0, 1.0)]), [p(1.0, 2.0), p(2.0, 1.0)]);
        // Equal agent: the higher principal wins.
        assert_eq!(pareto_prune(&[p(1.0, 1.0), p(1.0, 2.0)]), [p(1.0, 2.0)]);
        // Strict domination.
        assert_eq!(pareto_prune(&[p(1.0, 1.0), p(2.0, 2.0)]), [p(2.0, 2.0)]);
        // Duplicates collapse.
        assert_eq!(pareto_prune(&[p(1.0, 1.0), p(1.0, 1.0)]), [p(1.0, 1.0)]);
        assert_eq!(pareto_prune(&[]), []);
    }

    /// The sweep must agree with the quadratic dominance definition.
    #[test]
    fn pareto_prune_matches_the_naive_filter() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let points: Vec<UtilityVector> = (0..200)
                .map(|_| UtilityVector {
                    // A coarse grid forces plenty of ties and duplicates.
                    agent: f64::from(rng.gen_range(0..20u32)) / 4.0,
                    principal: f64::from(rng.gen_range(0..20u32)) / 4.0,
                })
                .collect();
            let mut naive: Vec<UtilityVector> = points
                .iter()
                .filter(|p| {
                    !points.iter().any(|q| {
                        q.agent >= p.agent
                            && q.principal >= p.principal
                            && (q.agent > p.agent || q.principal > p.principal)
                    })
                })
                .copied()
                .collect();
            naive.sort_by(|a, b| {
                a.agent
                    .total_cmp(&b.agent)
                    .then(b.principal.total_cmp(&a.principal))
            });
            naive.dedup_by(|a, b| a.agent == b.agent && a.principal == b.principal);
            let swept = pareto_prune(&points);
            assert_eq!(swept.len(), naive.len());
            for (a, b) in swept.iter().zip(&naive) {
                assert_eq!(a.agent, b.agent);
                assert_eq!(a.principal, b.principal);
            }
        }
    }

    /// Budget 1 buys the (s0,s1,s3) path worth 3.5 for a bonus of exactly 1.
    #[test]
    fn exact_solve_on_the_six_state_example() {
        let inst = six_state_example();
        let sol = dfar_solve(&inst, 0.5).unwrap();
        assert_eq!(sol.principal_value, 3.5);
        assert_eq!(sol.budget_used, 1.0);
        assert_eq!(sol.agent_value, 8.0);
        assert_eq!(path_of(&inst, &sol.policy), ["s0", "s1", "s3"]);
    }

    #[test]
    fn exact_solve_across_budgets() {
        let inst = six_state_example();
        let sol0 = dfar_solve(&inst.with_budget(0.0), 0.5).unwrap();
        assert_eq!(sol0.principal_value, 2.0);
        assert!(sol0.bonus.is_empty());

        let sol2 = dfar_solve(&inst.with_budget(2.0), 0.5).unwrap();
        assert_eq!(sol2.principal_value, 5.0);
        assert_eq!(sol2.budget_used, 2.0);
        assert_eq!(path_of(&inst, &sol2.policy), ["s0", "s2", "s5"]);

        // A budget beyond any gap sum hands the principal her maximum.
        let sol_big = dfar_solve(&inst.with_budget(12.0), 0.5).unwrap();
        assert_eq!(sol_big.principal_value, 5.0);
    }

    #[test]
    fn preconditions_are_enforced() {
        let err = dfar_solve(&six_state_example(), 0.4).unwrap_err();
        assert!(err.to_string().contains("not a multiple of epsilon"));

        let spec = crate::oracle::knapsack::KnapsackSpec {
            values: vec![1.0, 1.0],
            costs: vec![1.0, 1.0],
            capacity: 1.0,
        };
        let gadget = crate::oracle::knapsack::gen_knapsack_gadget(&spec).unwrap();
        let err = dfar_solve(&gadget.instance, 0.5).unwrap_err();
        assert!(err.to_string().contains("deterministic"));

        let err = dfar_solve(&two_state_cycle(3), 0.1).unwrap_err();
        assert!(err.to_string().contains("layer-graph conversion"));

        assert!(dfar_solve(&six_state_example(), 0.0).is_err());
    }

    /// Exact solve agrees with exhaustive enumeration on discretized layer
    /// graphs across budgets.
    #[test]
    fn exact_solve_matches_brute_force_on_layer_graphs() {
        for seed in 0..10u64 {
            let raw = gen_layer_graph(3, 3, 2, seed).unwrap();
            let inst = discretize_rewards(&raw, 0.05).unwrap();
            for budget in [0.0, 0.3, 0.7] {
                let inst = inst.with_budget(budget);
                let sol = dfar_solve(&inst, 0.05).unwrap();
                let exact = brute_force_optimal(&inst, None).unwrap();
                assert!(
                    (sol.principal_value - exact.principal_value).abs() <= 1e-9,
                    "seed {seed} budget {budget}: {} vs {}",
                    sol.principal_value,
                    exact.principal_value
                );
                assert!(sol.budget_used <= budget + 1e-9);
            }
        }
    }

    #[test]
    fn discretization_floors_onto_the_grid() {
        let raw = gen_layer_graph(3, 3, 2, 4).unwrap();
        let disc = discretize_rewards(&raw, 0.1).unwrap();
        for s in 0..raw.num_states() {
            for (a, b) in raw.arms(s).iter().zip(disc.arms(s)) {
                for (orig, got) in [
                    (a.agent_reward, b.agent_reward),
                    (a.principal_reward, b.principal_reward),
                ] {
                    assert!(got <= orig + ETA, "{got} > {orig}");
                    assert!(orig - got < 0.1, "{orig} dropped more than ε to {got}");
                    assert!(((got / 0.1).round() * 0.1 - got).abs() <= ETA);
                }
            }
        }
        // Already-discrete rewards are fixed points.
        let twice = discretize_rewards(&disc, 0.1).unwrap();
        for s in 0..disc.num_states() {
            for (a, b) in disc.arms(s).iter().zip(twice.arms(s)) {
                assert_eq!(a.agent_reward, b.agent_reward);
                assert_eq!(a.principal_reward, b.principal_reward);
            }
        }
    }

    /// On the six-state example with ε = 0.05 the discretization is the
    /// identity and the cap B + Hε = 1.1 still only affords the 3.5 path.
    #[test]
    fn bi_criteria_on_the_six_state_example() {
        let inst = six_state_example();
        let sol = solve_bi_criteria(&inst, 0.05).unwrap();
        assert_eq!(sol.principal_value, 3.5);
        assert!((sol.budget_used - 1.0).abs() <= 1e-12);
        let cert = sol.certificate.as_ref().unwrap();
        assert_eq!(cert.principal_value_original, 3.5);
        assert!((cert.additive_slack - 0.1).abs() <= 1e-12);
        assert!((cert.budget_cap - 1.1).abs() <= 1e-12);
        assert!(sol.budget_used <= cert.budget_cap + ETA);
    }

    /// Bi-criteria guarantee on arbitrary rewards: value within H·ε of the
    /// true optimum, bonus within B + H·ε.
    #[test]
    fn bi_criteria_guarantee_on_layer_graphs() {
        for seed in 0..10u64 {
            let inst = gen_layer_graph(3, 3, 2, seed).unwrap().with_budget(0.4);
            let epsilon = 0.05;
            let sol = solve_bi_criteria(&inst, epsilon).unwrap();
            let exact = brute_force_optimal(&inst, None).unwrap();
            let slack = inst.horizon() as f64 * epsilon;
            assert!(
                sol.principal_value >= exact.principal_value - slack - 1e-9,
                "seed {seed}: {} < {} − {slack}",
                sol.principal_value,
                exact.principal_value
            );
            assert!(sol.budget_used <= inst.budget() + slack + 1e-9, "seed {seed}");
        }
    }

    /// A cyclic deterministic instance is unrolled: with B = 0.5 and
    /// ε = 0.1 (cap 0.8) the best affordable 3-step path is
    /// back, hop, back — agent 1.6, principal 1.2, gap sum 0.6.
    #[test]
    fn bi_criteria_unrolls_cyclic_instances() {
        let inst = two_state_cycle(3);
        let sol = solve_bi_criteria(&inst, 0.1).unwrap();
        assert!((sol.principal_value - 1.2).abs() <= 1e-9);
        assert!((sol.budget_used - 0.6).abs() <= 1e-9);
        assert!(sol.budget_used <= sol.certificate.as_ref().unwrap().budget_cap + ETA);
        // Raw agent sum 1.6 plus the 0.6 bonus restores the default value.
        assert!((sol.agent_value - 2.2).abs() <= 1e-9);
    }

    /// δ variant: free conversions whose gap rounds down to zero are taken
    /// without any bonus — the counterexample that forces gap-cost
    /// accounting.
    #[test]
    fn delta_variant_converts_below_grid_gaps_for_free() {
        let mut b = InstanceBuilder::new();
        let s0 = b.state("s0");
        let t1 = b.state("t1");
        let t2 = b.state("t2");
        let a1 = b.action("a1");
        let a2 = b.action("a2");
        b.reward(s0, a1, 1.0, 0.0).transition(s0, a1, t1, 1.0);
        b.reward(s0, a2, 0.6, 1.0).transition(s0, a2, t2, 1.0);
        let inst = b.build(s0, 1, 0.4, false).unwrap();
        let sol = dfar_solve_delta(&inst, 0.5).unwrap();
        assert_eq!(sol.principal_value, 1.0);
        assert!(sol.bonus.is_empty());
        assert!((sol.agent_shortfall.unwrap() - 0.4).abs() <= 1e-12);
        // The exact optimum at 0.4 is also 1.0 (the gap is exactly 0.4).
        let exact = brute_force_optimal(&inst, None).unwrap();
        assert_eq!(exact.principal_value, 1.0);
    }

    /// δ variant on arbitrary rewards: budget kept, value at least the true
    /// optimum, shortfall at most H·ε.
    #[test]
    fn delta_variant_guarantees_on_layer_graphs() {
        for seed in 0..10u64 {
            let inst = gen_layer_graph(3, 3, 2, seed).unwrap().with_budget(0.4);
            let epsilon = 0.05;
            let sol = dfar_solve_delta(&inst, epsilon).unwrap();
            let exact = brute_force_optimal(&inst, None).unwrap();
            assert!(sol.budget_used <= inst.budget() + 1e-9, "seed {seed}");
            assert!(
                sol.principal_value >= exact.principal_value - 1e-9,
                "seed {seed}: {} < {}",
                sol.principal_value,
                exact.principal_value
            );
            let shortfall = sol.agent_shortfall.unwrap();
            assert!(
                shortfall <= inst.horizon() as f64 * epsilon + 1e-9,
                "seed {seed}: shortfall {shortfall}"
            );
        }
    }

    /// δ variant coincides with the exact solve when rewards are on-grid
    /// (all gaps are then grid multiples and no rounding occurs).
    #[test]
    fn delta_variant_is_exact_on_grid_rewards() {
        for seed in 0..10u64 {
            let inst = discretize_rewards(&gen_layer_graph(3, 3, 2, seed).unwrap(), 0.05)
                .unwrap()
                .with_budget(0.4);
            let exact = dfar_solve(&inst, 0.05).unwrap();
            let delta = dfar_solve_delta(&inst, 0.05).unwrap();
            assert!(
                (exact.principal_value - delta.principal_value).abs() <= 1e-9,
                "seed {seed}: {} vs {}",
                exact.principal_value,
                delta.principal_value
            );
        }
    }

    /// Pruned variant: bonus within B, value sandwiched between the true
    /// optima at B − H·ε and B.
    #[test]
    fn pruned_variant_sandwich_on_layer_graphs() {
        for seed in 0..10u64 {
            let inst = gen_layer_graph(3, 3, 2, seed).unwrap().with_budget(0.4);
            let epsilon = 0.05;
            let sol = dfar_solve_pruned(&inst, epsilon).unwrap();
            let slack = inst.horizon() as f64 * epsilon;
            let upper = brute_force_optimal(&inst, None).unwrap();
            let lower =
                brute_force_optimal(&inst.with_budget((0.4f64 - slack).max(0.0)), None).unwrap();
            assert!(sol.budget_used <= inst.budget() + 1e-9, "seed {seed}");
            assert!(
                sol.principal_value <= upper.principal_value + 1e-9,
                "seed {seed}: {} > {}",
                sol.principal_value,
                upper.principal_value
            );
            assert!(
                sol.principal_value >= lower.principal_value - 1e-9,
                "seed {seed}: {} < {}",
                sol.principal_value,
                lower.principal_value
            );
        }
    }

    /// At budget 0 the pruned variant returns exactly the default outcome.
    #[test]
    fn pruned_variant_is_exact_at_zero_budget() {
        for seed in 0..10u64 {
            let inst = gen_layer_graph(3, 3, 2, seed).unwrap();
            let sol = dfar_solve_pruned(&inst, 0.2).unwrap();
            let exact = brute_force_optimal(&inst, None).unwrap();
            assert!(
                (sol.principal_value - exact.principal_value).abs() <= 1e-9,
                "seed {seed}: {} vs {}",
                sol.principal_value,
                exact.principal_value
            );
            assert!(sol.bonus.total() <= 1e-9);
        }
    }

    /// Pruned variant equals the exact solve on on-grid rewards (buckets
    /// then separate every distinct agent sum).
    #[test]
    fn pruned_variant_is_exact_on_grid_rewards() {
        for seed in 0..10u64 {
            let inst = discretize_rewards(&gen_layer_graph(3, 3, 2, seed).unwrap(), 0.05)
                .unwrap()
                .with_budget(0.4);
            let exact = dfar_solve(&inst, 0.05).unwrap();
            let pruned = dfar_solve_pruned(&inst, 0.05).unwrap();
            assert!(
                (exact.principal_value - pruned.principal_value).abs() <= 1e-9,
                "seed {seed}: {} vs {}",
                exact.principal_value,
                pruned.principal_value
            );
        }
    }
}
