//! 0/1 knapsack: an exact dynamic-programming oracle plus the reduction
//! embedding a knapsack into a two-step principal–agent instance, used to
//! cross-validate the budgeted solvers end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::{InstanceBuilder, MdpInstance};
use crate::{ParsError, ETA};

/// A 0/1 knapsack: item values, item costs, and a capacity.
#[derive(Debug, Clone)]
pub struct KnapsackSpec {
    pub values: Vec<f64>,
    pub costs: Vec<f64>,
    pub capacity: f64,
}

impl KnapsackSpec {
    fn check(&self) -> Result<(), ParsError> {
        if self.values.len() != self.costs.len() {
            return Err(ParsError::Precondition(format!(
                "values ({}) and costs ({}) must have equal length",
                self.values.len(),
                self.costs.len()
            )));
        }
        let mut violations = Vec::new();
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                violations.push(format!("value {v} of item {i} must be finite and ≥ 0"));
            }
        }
        for (i, &c) in self.costs.iter().enumerate() {
            if !c.is_finite() || c < 0.0 {
                violations.push(format!("cost {c} of item {i} must be finite and ≥ 0"));
            }
        }
        if !self.capacity.is_finite() || self.capacity < 0.0 {
            violations.push(format!("capacity {} must be finite and ≥ 0", self.capacity));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ParsError::Validation { violations })
        }
    }
}

/// Exact 0/1 knapsack by capacity-grid dynamic programming. Every cost must
/// be an integer multiple of `resolution` (within [`ETA`]); the optimum is
/// exact, not approximate. Returns the best total value and the selection
/// (ties prefer leaving an item out).
pub fn knapsack_exact(
    spec: &KnapsackSpec,
    resolution: f64,
) -> Result<(f64, Vec<bool>), ParsError> {
    spec.check()?;
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(ParsError::Precondition(format!(
            "resolution {resolution} must be positive and finite"
        )));
    }
    let mut units = Vec::with_capacity(spec.costs.len());
    for &c in &spec.costs {
        let u = (c / resolution).round();
        if (u * resolution - c).abs() > ETA {
            return Err(ParsError::Precondition(format!(
                "cost {c} is not a multiple of the resolution {resolution}"
            )));
        }
        units.push(u as usize);
    }
    let capacity_units = ((spec.capacity + ETA) / resolution).floor() as usize;
    let n = spec.values.len();
    if capacity_units.saturating_add(1).saturating_mul(n.max(1)) > 200_000_000 {
        return Err(ParsError::Precondition(format!(
            "knapsack grid of {n} items × {capacity_units} capacity units is too large; \
             use a coarser resolution"
        )));
    }

    // dp[i][w]: best value using the first i items with at most w units.
    let width = capacity_units + 1;
    let mut dp = vec![vec![0.0f64; width]; n + 1];
    for i in 1..=n {
        for w in 0..width {
            let skip = dp[i - 1][w];
            let take = if units[i - 1] <= w {
                dp[i - 1][w - units[i - 1]] + spec.values[i - 1]
            } else {
                f64::NEG_INFINITY
            };
            dp[i][w] = skip.max(take);
        }
    }
    let mut selection = vec![false; n];
    let mut w = capacity_units;
    for i in (1..=n).rev() {
        if (dp[i][w] - dp[i - 1][w]).abs() > ETA {
            selection[i - 1] = true;
            w -= units[i - 1];
        }
    }
    Ok((dp[n][capacity_units], selection))
}

/// A knapsack embedded as a principal–agent instance, with the scales
/// needed to map values back to the original units.
#[derive(Debug, Clone)]
pub struct KnapsackGadget {
    pub instance: MdpInstance,
    /// Principal rewards were divided by this power of two.
    pub value_scale: f64,
    /// Agent rewards and the budget were divided by this power of two.
    pub cost_scale: f64,
}

/// The smallest power of two ≥ max(x, 1). Dividing any f64 by a power of two
/// only shifts its exponent, so the scaled rewards below are exact.
fn pow2_at_least(x: f64) -> f64 {
    let mut p = 1.0;
    while p < x {
        p *= 2.0;
    }
    p
}

/// Embeds a knapsack into a two-step stochastic tree. A root "spin" arm
/// moves to item state i with probability 1/N; there the agent chooses
/// "take" (agent reward −cᵢ/cost_scale, principal reward vᵢ/value_scale)
/// or "skip" (0, 0). The agent defaults to skipping every costly item, the
/// advantage gap of "take" is exactly cᵢ/cost_scale, and the instance budget
/// C/cost_scale admits exactly the selections with Σcᵢ ≤ C — so the optimal
/// principal value is (Σ_{i taken} vᵢ) / (N·value_scale).
pub fn gen_knapsack_gadget(spec: &KnapsackSpec) -> Result<KnapsackGadget, ParsError> {
    spec.check()?;
    let n = spec.values.len();
    if n == 0 {
        return Err(ParsError::Precondition(
            "knapsack gadget needs at least one item".to_string(),
        ));
    }
    let cost_scale = pow2_at_least(
        spec.costs
            .iter()
            .copied()
            .fold(spec.capacity, f64::max),
    );
    let value_scale = pow2_at_least(spec.values.iter().copied().fold(0.0, f64::max));

    let mut b = InstanceBuilder::new();
    let root = b.state("root");
    let spin = b.action("spin");
    let take = b.action("take");
    let skip = b.action("skip");
    b.reward(root, spin, 0.0, 0.0);
    let p = 1.0 / n as f64;
    for i in 0..n {
        let item = b.state(&format!("item{i}"));
        b.transition(root, spin, item, p);
        // Terminal arms: the reward is granted and the episode ends.
        b.reward(item, take, -spec.costs[i] / cost_scale, spec.values[i] / value_scale);
        b.reward(item, skip, 0.0, 0.0);
    }
    let instance = b.build(root, 2, spec.capacity / cost_scale, true)?;
    Ok(KnapsackGadget {
        instance,
        value_scale,
        cost_scale,
    })
}

/// A seeded random spec: `n` items with integer values in 1..=20 and integer
/// costs in 1..=10, capacity uniform over 0..=Σcosts. Integer costs make the
/// exact DP oracle applicable at resolution 1.
pub fn gen_knapsack_spec(n: usize, seed: u64) -> KnapsackSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(1..=20u32))).collect();
    let costs: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(1..=10u32))).collect();
    let total = costs.iter().sum::<f64>() as u64;
    let capacity = rng.gen_range(0..=total) as f64;
    KnapsackSpec {
        values,
        costs,
        capacity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Layout;
    use crate::oracle::brute_force::brute_force_optimal;
    use crate::shaping::{advantage_gap, agent_default_policy};

    fn reference_spec() -> KnapsackSpec {
        KnapsackSpec {
            values: vec![3.0, 5.0, 2.0, 4.0],
            costs: vec![2.0, 3.0, 1.0, 3.0],
            capacity: 5.0,
        }
    }

    /// Hand-checked: {item0, item1} costs 5 and is worth 8; no subset within
    /// capacity beats it ({1,3} would be worth 9 but costs 6).
    #[test]
    fn exact_dp_on_the_reference_spec() {
        let (best, selection) = knapsack_exact(&reference_spec(), 1.0).unwrap();
        assert_eq!(best, 8.0);
        assert_eq!(selection, [true, true, false, false]);
    }

    #[test]
    fn exact_dp_edge_cases() {
        let empty = KnapsackSpec {
            values: vec![],
            costs: vec![],
            capacity: 3.0,
        };
        assert_eq!(knapsack_exact(&empty, 1.0).unwrap().0, 0.0);

        // Zero capacity still admits zero-cost items.
        let zero_cap = KnapsackSpec {
            values: vec![4.0, 5.0],
            costs: vec![1.0, 0.0],
            capacity: 0.0,
        };
        let (best, selection) = knapsack_exact(&zero_cap, 1.0).unwrap();
        assert_eq!(best, 5.0);
        assert_eq!(selection, [false, true]);

        // Fractional resolution: both items together exceed the capacity.
        let frac = KnapsackSpec {
            values: vec![1.0, 2.0],
            costs: vec![0.5, 0.75],
            capacity: 1.0,
        };
        let (best, selection) = knapsack_exact(&frac, 0.25).unwrap();
        assert_eq!(best, 2.0);
        assert_eq!(selection, [false, true]);

        let err = knapsack_exact(&frac, 0.4).unwrap_err();
        assert!(err.to_string().contains("not a multiple"));
    }

    /// The gadget validates clean, lays out as a stochastic tree, defaults
    /// to skipping, and carries exact per-item gaps.
    #[test]
    fn gadget_shape_and_gaps() {
        let gadget = gen_knapsack_gadget(&reference_spec()).unwrap();
        let inst = &gadget.instance;
        let report = inst.validate();
        assert!(report.is_clean(), "violations: {:?}", report.violations);
        assert_eq!(report.layout, Layout::StochasticTree { arity: 4 });
        assert_eq!(inst.num_states(), 5);
        assert_eq!(gadget.cost_scale, 8.0);
        assert_eq!(gadget.value_scale, 8.0);

        let take = inst.action_id("take").unwrap();
        let skip = inst.action_id("skip").unwrap();
        let default = agent_default_policy(inst).unwrap();
        for i in 0..4 {
            let item = inst.state_id(&format!("item{i}")).unwrap();
            assert_eq!(default.policy.choice(item), Some(skip));
            // Gap of "take" is the scaled cost, exactly (power-of-two scale).
            let gap = advantage_gap(inst, item, take).unwrap();
            assert_eq!(gap, reference_spec().costs[i] / 8.0);
        }
    }

    /// End to end: exhausting the gadget recovers the knapsack optimum after
    /// undoing the scales.
    #[test]
    fn gadget_optimum_matches_the_dp() {
        let spec = reference_spec();
        let gadget = gen_knapsack_gadget(&spec).unwrap();
        let sol = brute_force_optimal(&gadget.instance, None).unwrap();
        let n = spec.values.len() as f64;
        let recovered = sol.principal_value * n * gadget.value_scale;
        assert_eq!(recovered.round(), 8.0);
        assert!((recovered - 8.0).abs() <= 1e-9);
        // Budget actually spent: the scaled cost of {item0, item1}.
        assert!((sol.budget_used - 5.0 / gadget.cost_scale).abs() <= 1e-12);
    }
}
