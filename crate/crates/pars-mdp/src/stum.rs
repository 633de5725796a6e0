//! Budget-grid dynamic programming for stochastic trees.
//!
//! Bottom-up over the tree, each state keeps the principal's best value for
//! every grid budget 0, ε, …, B: converting the agent away from his default
//! arm charges that arm's advantage gap (rounded onto the grid), and the
//! remaining units are split among the chosen arm's subtrees by a
//! knapsack-style allocation chain ([`ocba`]). A top-down pass then follows
//! the stored choices, placing bonuses and child budgets.
//!
//! Two variants differ in how charges round and what the bonus pays:
//!
//! * **strict** ([`stum_solve`]) rounds charges *up* and places the exact
//!   gap, so the agent truly complies and the bonus never exceeds the
//!   (optionally ε·|S|-inflated) budget;
//! * **δ-greedy** ([`stum_solve_delta`]) rounds charges *down* and pays the
//!   rounded amount, underpaying each conversion by less than ε — a
//!   δ-approximate agent still complies when ε ≤ δ/|S|, and the bonus fits
//!   the original budget.

use std::cmp::Reverse;

use crate::eval::{evaluate_policy, RewardMap};
use crate::mdp::{MdpInstance, Policy, StateId};
use crate::shaping::{advantage_gaps, best_response, BonusFunction, GapAnalysis};
use crate::{Algorithm, ParsError, Solution, ETA};

/// A budget discretization: multiples of `epsilon` up to `units`·ε.
#[derive(Debug, Clone, Copy)]
pub struct BudgetGrid {
    pub epsilon: f64,
    pub units: usize,
}

impl BudgetGrid {
    pub fn new(epsilon: f64, capacity: f64) -> Result<Self, ParsError> {
        // Comparisons below forgive ETA of float dust, so the step must sit
        // well above it.
        if !(epsilon.is_finite() && epsilon > 100.0 * ETA) {
            return Err(ParsError::Precondition(format!(
                "epsilon {epsilon} must be finite and larger than {}",
                100.0 * ETA
            )));
        }
        let units = ((capacity + ETA) / epsilon).floor().max(0.0);
        if units > 50_000_000.0 {
            return Err(ParsError::Precondition(format!(
                "budget grid of {units} units is too large; use a coarser epsilon"
            )));
        }
        Ok(Self {
            epsilon,
            units: units as usize,
        })
    }

    /// Whole units covered by `x` (rounding down).
    pub fn round_down(&self, x: f64) -> usize {
        (((x + ETA) / self.epsilon).floor()).max(0.0) as usize
    }

    /// Units needed to cover `x` (rounding up).
    pub fn round_up(&self, x: f64) -> usize {
        (((x - ETA) / self.epsilon).ceil()).max(0.0) as usize
    }

    pub fn value(&self, units: usize) -> f64 {
        units as f64 * self.epsilon
    }
}

#[derive(Clone, Copy)]
enum ChargeRounding {
    Up,
    Down,
}

/// One stored DP decision: which arm, how many units its conversion
/// charged, and how the remaining units split across the arm's children.
#[derive(Debug, Clone)]
struct Choice {
    arm_pos: usize,
    splits: Vec<usize>,
}

struct StumRun {
    grid: BudgetGrid,
    /// Stored decisions per decision state and budget.
    choices: Vec<Option<Vec<Choice>>>,
}

/// Allocation chain over `children` = (probability, value table) pairs:
/// returns the best combined table over all children and, per chain step,
/// the units granted to that child (first maximizer, fewest units).
fn allocation_chain(
    children: &[(f64, &[f64])],
    m: usize,
) -> (Vec<f64>, Vec<Vec<usize>>) {
    let mut combined = vec![0.0; m + 1];
    let mut backptrs: Vec<Vec<usize>> = Vec::with_capacity(children.len());
    for (i, &(p, table)) in children.iter().enumerate() {
        let mut next = vec![0.0; m + 1];
        let mut bt = vec![0usize; m + 1];
        for b in 0..=m {
            let mut best = f64::NEG_INFINITY;
            let mut best_k = 0;
            for k in 0..=b {
                let v = if i == 0 {
                    // First child takes everything it is given; the chain
                    // below it is empty.
                    if k == b { p * table[k] } else { continue }
                } else {
                    p * table[k] + combined[b - k]
                };
                if v > best {
                    best = v;
                    best_k = k;
                }
            }
            next[b] = best;
            bt[b] = best_k;
        }
        combined = next;
        backptrs.push(bt);
    }
    (combined, backptrs)
}

/// Follows chain backpointers to recover each child's units from `budget`.
fn walk_chain(backptrs: &[Vec<usize>], mut budget: usize) -> Vec<usize> {
    let c = backptrs.len();
    let mut ks = vec![0usize; c];
    for i in (0..c).rev() {
        ks[i] = backptrs[i][budget];
        budget -= ks[i];
    }
    ks
}

/// Best split of `budget` units among children (probability, value table)
/// pairs: the maximal Σ pᵢ·tableᵢ[kᵢ] with Σ kᵢ = budget, and the split
/// attaining it (ties prefer fewer units to later children).
pub fn ocba(children: &[(f64, Vec<f64>)], budget: usize) -> (f64, Vec<usize>) {
    for (p, table) in children {
        assert!(
            table.len() > budget,
            "child table (len {}) must cover the budget {budget} (probability {p})",
            table.len()
        );
    }
    let refs: Vec<(f64, &[f64])> = children.iter().map(|(p, t)| (*p, t.as_slice())).collect();
    let (combined, backptrs) = allocation_chain(&refs, budget);
    (combined[budget], walk_chain(&backptrs, budget))
}

fn preflight(instance: &MdpInstance) -> Result<(), ParsError> {
    let report = instance.validate();
    if !report.is_clean() {
        return Err(ParsError::Validation {
            violations: report.violations,
        });
    }
    if !instance.is_tree() {
        return Err(ParsError::Precondition(format!(
            "budget-grid solver requires a tree-shaped instance (layout: {})",
            instance.layout()
        )));
    }
    Ok(())
}

fn run_dp(
    instance: &MdpInstance,
    analysis: &GapAnalysis,
    grid: BudgetGrid,
    rounding: ChargeRounding,
) -> StumRun {
    let n = instance.num_states();
    let depths = instance.min_depths();
    let reachable = instance.reachable();
    let mut decisions: Vec<StateId> = (0..n)
        .filter(|&s| {
            reachable[s]
                && matches!(depths[s], Some(d) if d < instance.horizon())
                && !instance.arms(s).is_empty()
        })
        .collect();
    // Leaves first: deepest states are settled before their ancestors.
    decisions.sort_by_key(|&s| (Reverse(depths[s]), s));

    let m = grid.units;
    let zeros = vec![0.0; m + 1];
    let mut tables: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut choices: Vec<Option<Vec<Choice>>> = vec![None; n];
    for &s in &decisions {
        let default_pos = instance
            .arm_position(s, analysis.default.policy.choice(s).expect("decision state"))
            .expect("default choice is an arm of s");
        // Charge and allocation chain per arm.
        let arm_data: Vec<(usize, Vec<f64>, Vec<Vec<usize>>)> = instance
            .arms(s)
            .iter()
            .enumerate()
            .map(|(pos, arm)| {
                let charge = match rounding {
                    ChargeRounding::Up => grid.round_up(analysis.gaps[s][pos]),
                    ChargeRounding::Down => grid.round_down(analysis.gaps[s][pos]),
                };
                let kids: Vec<(f64, &[f64])> = arm
                    .transitions
                    .iter()
                    .map(|&(t, p)| (p, tables[t].as_deref().unwrap_or(&zeros)))
                    .collect();
                let (combined, backptrs) = allocation_chain(&kids, m);
                (charge, combined, backptrs)
            })
            .collect();
        debug_assert_eq!(arm_data[default_pos].0, 0, "default arm has zero gap");

        let mut table = vec![0.0; m + 1];
        let mut stored = Vec::with_capacity(m + 1);
        for b in 0..=m {
            // Seed with the (always free) default arm, then scan for strict
            // improvements in arm order — at budget 0 this reproduces the
            // agent's own choice.
            let mut best_pos = default_pos;
            let mut best_val = instance.arms(s)[default_pos].principal_reward
                + arm_data[default_pos].1[b];
            for (pos, (charge, combined, _)) in arm_data.iter().enumerate() {
                if pos == default_pos || *charge > b {
                    continue;
                }
                let val = instance.arms(s)[pos].principal_reward + combined[b - charge];
                if val > best_val {
                    best_val = val;
                    best_pos = pos;
                }
            }
            let (charge, _, backptrs) = &arm_data[best_pos];
            table[b] = best_val;
            stored.push(Choice {
                arm_pos: best_pos,
                splits: walk_chain(backptrs, b - charge),
            });
        }
        tables[s] = Some(table);
        choices[s] = Some(stored);
    }
    StumRun { grid, choices }
}

/// Top-down pass: follow stored choices from the root's full budget,
/// placing a bonus at every conversion (the exact gap in strict mode, the
/// rounded-down gap in δ mode) and handing each subtree its allocated units.
fn extract(
    instance: &MdpInstance,
    analysis: &GapAnalysis,
    run: &StumRun,
    exact_gaps: bool,
) -> (BonusFunction, Policy) {
    let mut policy = analysis.default.policy.clone();
    let mut bonus = BonusFunction::new();
    let mut stack = vec![(instance.initial(), run.grid.units)];
    while let Some((s, budget)) = stack.pop() {
        let Some(stored) = &run.choices[s] else { continue };
        let choice = &stored[budget];
        let arm = &instance.arms(s)[choice.arm_pos];
        policy.set(s, arm.action);
        if analysis.default.policy.choice(s) != Some(arm.action) {
            let gap = analysis.gaps[s][choice.arm_pos];
            let amount = if exact_gaps {
                gap
            } else {
                run.grid.value(run.grid.round_down(gap))
            };
            bonus.insert(s, arm.action, amount);
        }
        for (i, &(t, _)) in arm.transitions.iter().enumerate() {
            stack.push((t, choice.splits[i]));
        }
    }
    (bonus, policy)
}

/// Strict budget-grid solve on a stochastic tree. Charges round *up* onto
/// the ε-grid, so the placed bonus (the exact gaps) always fits the
/// effective budget; with `inflate_budget` the grid spans B + ε·|S|, which
/// restores the guarantee of matching every exactly-B-implementable policy.
/// The returned values are the agent's actual best response to the bonus.
pub fn stum_solve(
    instance: &MdpInstance,
    epsilon: f64,
    inflate_budget: bool,
) -> Result<Solution, ParsError> {
    preflight(instance)?;
    let analysis = advantage_gaps(instance)?;
    let effective_budget = instance.budget()
        + if inflate_budget {
            epsilon * instance.num_states() as f64
        } else {
            0.0
        };
    let grid = BudgetGrid::new(epsilon, effective_budget)?;
    let run = run_dp(instance, &analysis, grid, ChargeRounding::Up);
    let (bonus, policy) = extract(instance, &analysis, &run, true);
    let response = best_response(instance, &bonus)?;
    Ok(Solution {
        algorithm: Algorithm::Stum,
        budget_used: bonus.total(),
        bonus,
        policy,
        principal_value: response.principal_value,
        agent_value: response.agent_value,
        epsilon,
        effective_budget,
        agent_shortfall: None,
        certificate: None,
    })
}

/// δ-greedy budget-grid solve on a stochastic tree. Charges and payments
/// both round *down* onto the grid (step `epsilon`, defaulting to δ/|S|), so
/// the bonus fits the original budget; each conversion is underpaid by less
/// than ε, which a δ-approximate agent absorbs — the reported
/// `agent_shortfall` is the total slack. Values are those of the returned
/// policy itself (a strict agent might deviate).
pub fn stum_solve_delta(
    instance: &MdpInstance,
    epsilon: Option<f64>,
    delta: f64,
) -> Result<Solution, ParsError> {
    preflight(instance)?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(ParsError::Precondition(format!(
            "delta {delta} must be positive and finite"
        )));
    }
    let epsilon = epsilon.unwrap_or(delta / instance.num_states() as f64);
    let analysis = advantage_gaps(instance)?;
    let grid = BudgetGrid::new(epsilon, instance.budget())?;
    let run = run_dp(instance, &analysis, grid, ChargeRounding::Down);
    let (bonus, policy) = extract(instance, &analysis, &run, false);
    let agent_value = evaluate_policy(instance, &policy, &bonus.agent_reward_map(instance))?
        .at(instance.initial());
    let principal_value = evaluate_policy(instance, &policy, &RewardMap::principal(instance))?
        .at(instance.initial());
    let shortfall = (analysis.default.agent_value - agent_value).max(0.0);
    Ok(Solution {
        algorithm: Algorithm::StumDelta,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::six_state_example;
    use crate::oracle::brute_force::brute_force_optimal;
    use crate::oracle::generators::gen_random_tree;
    use crate::oracle::knapsack::{gen_knapsack_gadget, knapsack_exact, KnapsackSpec};

    fn reference_spec() -> KnapsackSpec {
        KnapsackSpec {
            values: vec![3.0, 5.0, 2.0, 4.0],
            costs: vec![2.0, 3.0, 1.0, 3.0],
            capacity: 5.0,
        }
    }

    /// Two children, tables over 0..=2 units: worth 3.5 by giving one unit
    /// to each child — and the (1,1) split is the canonical tie choice.
    #[test]
    fn allocation_hand_example() {
        let children = vec![(0.5, vec![0.0, 4.0, 5.0]), (0.5, vec![0.0, 3.0, 7.0])];
        let (value, split) = ocba(&children, 2);
        assert_eq!(value, 3.5);
        assert_eq!(split, [1, 1]);
    }

    /// The chain must agree with brute-force enumeration of all splits.
    #[test]
    fn allocation_matches_exhaustive_splits() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let m = rng.gen_range(0..=10usize);
            let c = rng.gen_range(1..=3usize);
            let children: Vec<(f64, Vec<f64>)> = (0..c)
                .map(|_| {
                    let p = rng.gen_range(0.1..1.0);
                    // Monotone tables, as value tables always are.
                    let mut t = vec![0.0];
                    for _ in 0..m {
                        let step: f64 = rng.gen();
                        t.push(t.last().unwrap() + step);
                    }
                    (p, t)
                })
                .collect();
            let (value, split) = ocba(&children, m);
            assert_eq!(split.iter().sum::<usize>(), m);
            // Enumerate all splits of m among c children.
            let mut best = f64::NEG_INFINITY;
            let mut counters = vec![0usize; c];
            'outer: loop {
                if counters.iter().sum::<usize>() == m {
                    let v: f64 = counters
                        .iter()
                        .zip(&children)
                        .map(|(&k, (p, t))| p * t[k])
                        .sum();
                    best = best.max(v);
                }
                let mut i = 0;
                loop {
                    if i == c {
                        break 'outer;
                    }
                    counters[i] += 1;
                    if counters[i] <= m {
                        break;
                    }
                    counters[i] = 0;
                    i += 1;
                }
            }
            assert!(
                (value - best).abs() <= 1e-12,
                "chain {value} vs exhaustive {best}"
            );
            let direct: f64 = split
                .iter()
                .zip(&children)
                .map(|(&k, (p, t))| p * t[k])
                .sum();
            assert!((direct - value).abs() <= 1e-12);
        }
    }

    /// Budget 0 changes nothing: empty bonus, the agent's own policy.
    #[test]
    fn zero_budget_returns_the_default_policy() {
        let gadget = gen_knapsack_gadget(&reference_spec()).unwrap();
        let inst = gadget.instance.with_budget(0.0);
        let sol = stum_solve(&inst, 0.125, false).unwrap();
        assert!(sol.bonus.is_empty());
        assert_eq!(sol.budget_used, 0.0);
        let skip = inst.action_id("skip").unwrap();
        for i in 0..4 {
            let item = inst.state_id(&format!("item{i}")).unwrap();
            assert_eq!(sol.policy.choice(item), Some(skip));
        }
        assert_eq!(sol.principal_value, 0.0);
    }

    /// On the knapsack gadget with ε = 1/cost_scale every charge is an exact
    /// integer, so the un-inflated solve IS the knapsack DP: value 8 of the
    /// reference spec, recovered through the scales.
    #[test]
    fn gadget_solve_is_exact_on_the_aligned_grid() {
        let spec = reference_spec();
        let gadget = gen_knapsack_gadget(&spec).unwrap();
        let epsilon = 1.0 / gadget.cost_scale;
        let sol = stum_solve(&gadget.instance, epsilon, false).unwrap();
        let n = spec.values.len() as f64;
        let recovered = sol.principal_value * n * gadget.value_scale;
        assert!((recovered - 8.0).abs() <= 1e-9, "recovered {recovered}");
        assert!(sol.budget_used <= gadget.instance.budget() + ETA);
        // Items 0 and 1 are taken, 2 and 3 skipped.
        let take = gadget.instance.action_id("take").unwrap();
        let taken: Vec<bool> = (0..4)
            .map(|i| {
                let item = gadget.instance.state_id(&format!("item{i}")).unwrap();
                sol.policy.choice(item) == Some(take)
            })
            .collect();
        assert_eq!(taken, [true, true, false, false]);
    }

    /// Inflating by ε·|S| = 5/8 raises the gadget capacity from 5 to 10,
    /// where the knapsack DP says all four items fit for value 14.
    #[test]
    fn gadget_solve_with_inflated_budget() {
        let spec = reference_spec();
        let gadget = gen_knapsack_gadget(&spec).unwrap();
        let epsilon = 1.0 / gadget.cost_scale;
        let sol = stum_solve(&gadget.instance, epsilon, true).unwrap();
        let inflated_capacity = KnapsackSpec {
            capacity: sol.effective_budget * gadget.cost_scale,
            ..spec.clone()
        };
        let (best, _) = knapsack_exact(&inflated_capacity, 1.0).unwrap();
        assert_eq!(best, 14.0);
        let n = spec.values.len() as f64;
        let recovered = sol.principal_value * n * gadget.value_scale;
        assert!((recovered - best).abs() <= 1e-9, "recovered {recovered}");
        assert!(sol.budget_used <= sol.effective_budget + ETA);
    }

    /// Sandwich on random stochastic trees: the strict solve with inflation
    /// is at least the exact optimum at B and at most the exact optimum at
    /// the inflated budget.
    #[test]
    fn random_trees_bracket_the_exact_optimum() {
        for seed in 0..10u64 {
            let inst = gen_random_tree(2, 3, seed).unwrap().with_budget(0.7);
            let epsilon = 0.05;
            let sol = stum_solve(&inst, epsilon, true).unwrap();
            let lower = brute_force_optimal(&inst, None).unwrap();
            let upper =
                brute_force_optimal(&inst.with_budget(sol.effective_budget), None).unwrap();
            assert!(
                sol.principal_value >= lower.principal_value - 1e-9,
                "seed {seed}: {} < {}",
                sol.principal_value,
                lower.principal_value
            );
            assert!(
                sol.principal_value <= upper.principal_value + 1e-9,
                "seed {seed}: {} > {}",
                sol.principal_value,
                upper.principal_value
            );
            assert!(sol.budget_used <= sol.effective_budget + ETA, "seed {seed}");
        }
    }

    /// The δ variant stays within the original budget, never shorts the
    /// agent by more than δ, and still reaches the exact optimum's value.
    #[test]
    fn delta_variant_guarantees() {
        for seed in 0..10u64 {
            let inst = gen_random_tree(2, 3, seed).unwrap().with_budget(0.7);
            let delta = 0.05;
            let sol = stum_solve_delta(&inst, None, delta).unwrap();
            assert!(sol.budget_used <= inst.budget() + ETA, "seed {seed}");
            let shortfall = sol.agent_shortfall.unwrap();
            assert!(shortfall <= delta + 1e-9, "seed {seed}: shortfall {shortfall}");
            let exact = brute_force_optimal(&inst, None).unwrap();
            assert!(
                sol.principal_value >= exact.principal_value - 1e-9,
                "seed {seed}: {} < {}",
                sol.principal_value,
                exact.principal_value
            );
        }
    }

    /// Re-evaluating the strict solution's bonus through the agent's actual
    /// best response reproduces the solver's claimed values.
    #[test]
    fn strict_solution_round_trips_through_the_best_response() {
        for seed in [3u64, 17, 99] {
            let inst = gen_random_tree(3, 2, seed).unwrap().with_budget(0.5);
            let sol = stum_solve(&inst, 0.02, true).unwrap();
            let response = best_response(&inst, &sol.bonus).unwrap();
            assert!((response.principal_value - sol.principal_value).abs() <= 1e-9);
            assert!((response.agent_value - sol.agent_value).abs() <= 1e-9);
        }
    }

    #[test]
    fn non_tree_instances_are_rejected() {
        let err = stum_solve(&six_state_example(), 0.1, false).unwrap_err();
        assert!(err.to_string().contains("tree-shaped"));

        let err = stum_solve(&crate::fixtures::two_state_cycle(3), 0.1, false).unwrap_err();
        assert!(err.to_string().contains("tree-shaped"));
    }

    #[test]
    fn bad_epsilon_is_rejected() {
        let gadget = gen_knapsack_gadget(&reference_spec()).unwrap();
        assert!(stum_solve(&gadget.instance, 0.0, false).is_err());
        assert!(stum_solve(&gadget.instance, -1.0, false).is_err());
        assert!(stum_solve(&gadget.instance, f64::NAN, false).is_err());
    }
}
